//! Planar diagram codes, orientation, faces and the checkerboard flow.
//!
//! Ports of a crossing are numbered 0..3 counterclockwise starting at the
//! incoming under-strand, so port 0 is always incoming and port 2 outgoing.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// (crossing index, port index).
pub type Port = (usize, u8);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rotation {
    Cw,
    Ccw,
}

/// A closed component without crossings, placed in a region of the diagram.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnknotRecord {
    pub rotation: Rotation,
    /// Containing region; `None` means the outer region.
    pub face: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct PdCode {
    pub crossings: Vec<[u32; 4]>,
    pub unknots: Vec<UnknotRecord>,
    pub outer_face: Option<usize>,
}

/// A half-edge: a segment traversed along (`fwd`) or against its orientation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Dart {
    pub seg: usize,
    pub fwd: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    White,
    Black,
}

impl Color {
    pub fn sign(self) -> i8 {
        match self {
            Color::White => 1,
            Color::Black => -1,
        }
    }

    fn flip(self) -> Color {
        match self {
            Color::White => Color::Black,
            Color::Black => Color::White,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Region {
    pub id: usize,
    pub boundary: Vec<Dart>,
    pub color: Color,
    pub is_outer: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Crossing {
    pub id: usize,
    pub arcs: [u32; 4],
    pub sign: i8,
    /// Whether each port is an incoming end.
    pub incoming: [bool; 4],
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Arc {
    pub label: u32,
    pub from: Port,
    pub to: Port,
    pub flow: i8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Unknot {
    pub rotation: Rotation,
    pub container: usize,
    pub interior: usize,
    pub flow: i8,
}

/// Flow values indexed by segment: arcs first (label - 1), then unknots.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Flow {
    pub values: Vec<i8>,
}

impl Flow {
    pub fn of_label(&self, label: u32) -> i8 {
        self.values[label as usize - 1]
    }
}

/// How the unbounded region is chosen.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OuterChoice {
    /// Face to the right of the smallest arc of each connected piece.
    Default,
    /// Explicit face index; other connected pieces use the default.
    Face(usize),
    /// Pick, per connected piece, the coloring giving these arcs these flows.
    Flows(Vec<(usize, i8)>),
}

#[derive(Clone, Debug, Serialize)]
pub struct Diagram {
    #[serde(skip)]
    pub pd: PdCode,
    pub crossings: Vec<Crossing>,
    pub arcs: Vec<Arc>,
    pub unknots: Vec<Unknot>,
    pub regions: Vec<Region>,
    pub n_plus: usize,
    pub n_minus: usize,
    pub outer: usize,
    /// Regions on the [left, right] of each arc.
    pub arc_faces: Vec<[usize; 2]>,
    /// Connected piece of each crossing.
    pub crossing_piece: Vec<usize>,
    pub link_components: usize,
}

/// Orientation and face data shared by parsing and diagram construction.
#[derive(Clone, Debug)]
pub(crate) struct Embedding {
    pub incoming: Vec<[bool; 4]>,
    pub arc_ends: Vec<(Port, Port)>,
    pub faces: Vec<Vec<Dart>>,
    pub dart_face: Vec<usize>,
    pub crossing_piece: Vec<usize>,
    pub pieces: usize,
    pub face_piece: Vec<usize>,
}

impl Embedding {
    pub fn new(crossings: &[[u32; 4]]) -> Result<Embedding> {
        let n = crossings.len();
        let narcs = 2 * n;
        let mut ends: Vec<Vec<Port>> = vec![Vec::new(); narcs];
        for (c, x) in crossings.iter().enumerate() {
            for (p, &a) in x.iter().enumerate() {
                if a == 0 || a as usize > narcs {
                    return Err(Error::Invalid(format!("arc label {a} out of range")));
                }
                ends[a as usize - 1].push((c, p as u8));
            }
        }
        for (a, e) in ends.iter().enumerate() {
            if e.len() != 2 {
                return Err(Error::Invalid(format!(
                    "arc {} occurs {} times, expected 2",
                    a + 1,
                    e.len()
                )));
            }
        }
        let incoming = orient(crossings, &ends)?;
        let arc_ends: Vec<(Port, Port)> = ends
            .iter()
            .map(|e| {
                let (x, y) = (e[0], e[1]);
                if incoming[x.0][x.1 as usize] {
                    (y, x)
                } else {
                    (x, y)
                }
            })
            .collect();

        // face tracing keeps the face on the left of each dart
        let mut dart_face = vec![usize::MAX; 2 * narcs];
        let mut faces = Vec::new();
        for start in 0..2 * narcs {
            if dart_face[start] != usize::MAX {
                continue;
            }
            let id = faces.len();
            let mut boundary = Vec::new();
            let mut cur = start;
            loop {
                dart_face[cur] = id;
                let d = Dart { seg: cur / 2, fwd: cur % 2 == 0 };
                boundary.push(d);
                let (from, to) = arc_ends[d.seg];
                let (c, p) = if d.fwd { to } else { from };
                let q = (p + 3) % 4;
                let next_arc = crossings[c][q as usize] as usize - 1;
                let fwd = arc_ends[next_arc].0 == (c, q);
                cur = 2 * next_arc + if fwd { 0 } else { 1 };
                if cur == start {
                    break;
                }
                if dart_face[cur] != usize::MAX {
                    return Err(Error::Invalid("inconsistent rotation system".into()));
                }
            }
            faces.push(boundary);
        }

        let mut uf = petgraph::unionfind::UnionFind::<usize>::new(n.max(1));
        for &(a, b) in &arc_ends {
            uf.union(a.0, b.0);
        }
        let mut root_piece = std::collections::BTreeMap::new();
        let mut crossing_piece = vec![0; n];
        for (c, piece) in crossing_piece.iter_mut().enumerate() {
            let r = uf.find(c);
            let next = root_piece.len();
            *piece = *root_piece.entry(r).or_insert(next);
        }
        let pieces = root_piece.len();
        let face_piece: Vec<usize> =
            faces.iter().map(|f| crossing_piece[arc_ends[f[0].seg].0 .0]).collect();
        for piece in 0..pieces {
            let v = crossing_piece.iter().filter(|&&p| p == piece).count() as i64;
            let f = face_piece.iter().filter(|&&p| p == piece).count() as i64;
            if v - 2 * v + f != 2 {
                return Err(Error::Invalid(format!(
                    "rotation system is not planar (V - E + F = {})",
                    v - 2 * v + f
                )));
            }
        }
        Ok(Embedding { incoming, arc_ends, faces, dart_face, crossing_piece, pieces, face_piece })
    }

    pub fn left_face(&self, arc: usize) -> usize {
        self.dart_face[2 * arc]
    }

    pub fn right_face(&self, arc: usize) -> usize {
        self.dart_face[2 * arc + 1]
    }
}

fn orient(crossings: &[[u32; 4]], ends: &[Vec<Port>]) -> Result<Vec<[bool; 4]>> {
    let n = crossings.len();
    let mut dir: Vec<[Option<bool>; 4]> = vec![[Some(true), None, Some(false), None]; n];
    loop {
        let mut changed = true;
        while changed {
            changed = false;
            for e in ends {
                let (x, y) = (e[0], e[1]);
                let dx = dir[x.0][x.1 as usize];
                let dy = dir[y.0][y.1 as usize];
                match (dx, dy) {
                    (Some(a), None) => {
                        dir[y.0][y.1 as usize] = Some(!a);
                        changed = true;
                    }
                    (None, Some(b)) => {
                        dir[x.0][x.1 as usize] = Some(!b);
                        changed = true;
                    }
                    (Some(a), Some(b)) if a == b => {
                        return Err(Error::Invalid(format!(
                            "arc {} cannot be oriented consistently",
                            crossings[x.0][x.1 as usize]
                        )));
                    }
                    _ => {}
                }
            }
            for d in dir.iter_mut() {
                match (d[1], d[3]) {
                    (Some(a), None) => {
                        d[3] = Some(!a);
                        changed = true;
                    }
                    (None, Some(b)) => {
                        d[1] = Some(!b);
                        changed = true;
                    }
                    (Some(a), Some(b)) if a == b => {
                        return Err(Error::Invalid("over-strand orientation is inconsistent".into()));
                    }
                    _ => {}
                }
            }
        }
        // components passing only over: fall back to consecutive labels
        match (0..n).find(|&c| dir[c][1].is_none()) {
            None => break,
            Some(c) => {
                let (j, l) = (crossings[c][1], crossings[c][3]);
                let l_to_j = j == l + 1 || l > j + 1;
                dir[c][3] = Some(l_to_j);
                dir[c][1] = Some(!l_to_j);
            }
        }
    }
    Ok(dir.into_iter().map(|d| [d[0].unwrap(), d[1].unwrap(), d[2].unwrap(), d[3].unwrap()]).collect())
}

impl PdCode {
    /// Validates and normalizes arc labels to 1..2n (order preserving).
    pub fn new(crossings: Vec<[u32; 4]>, unknots: Vec<UnknotRecord>, outer_face: Option<usize>) -> Result<PdCode> {
        let mut labels: Vec<u32> = crossings.iter().flatten().copied().collect();
        labels.sort_unstable();
        let mut counts = std::collections::BTreeMap::new();
        for &l in &labels {
            *counts.entry(l).or_insert(0usize) += 1;
        }
        if let Some((l, c)) = counts.iter().find(|(_, &c)| c != 2) {
            return Err(Error::Invalid(format!("arc {l} occurs {c} times, expected 2")));
        }
        let relabel: std::collections::BTreeMap<u32, u32> =
            counts.keys().enumerate().map(|(i, &l)| (l, i as u32 + 1)).collect();
        let crossings: Vec<[u32; 4]> =
            crossings.iter().map(|x| x.map(|a| relabel[&a])).collect();
        Embedding::new(&crossings)?;
        Ok(PdCode { crossings, unknots, outer_face })
    }

    pub fn component_count(&self) -> usize {
        strand_components(&self.crossings) + self.unknots.len()
    }

    pub fn to_text(&self) -> String {
        let xs: Vec<String> = self
            .crossings
            .iter()
            .map(|x| format!("X[{},{},{},{}]", x[0], x[1], x[2], x[3]))
            .collect();
        let mut s = format!("PD[{}]", xs.join(","));
        for u in &self.unknots {
            let r = match u.rotation {
                Rotation::Cw => "cw",
                Rotation::Ccw => "ccw",
            };
            match u.face {
                Some(f) => s.push_str(&format!(";O[{r},{f}]")),
                None => s.push_str(&format!(";O[{r}]")),
            }
        }
        s
    }

    pub fn to_json(&self) -> Value {
        let unknots: Vec<Value> = self
            .unknots
            .iter()
            .map(|u| match u.face {
                None => serde_json::to_value(u.rotation).unwrap(),
                Some(f) => serde_json::json!({"rotation": u.rotation, "face": f}),
            })
            .collect();
        let mut v = serde_json::json!({"crossings": self.crossings, "unknots": unknots});
        if let Some(k) = self.outer_face {
            v["outer_face"] = serde_json::json!(k);
        }
        v
    }
}

pub(crate) fn strand_components(crossings: &[[u32; 4]]) -> usize {
    let Ok(emb) = Embedding::new(crossings) else { return 0 };
    let narcs = emb.arc_ends.len();
    let mut seen = vec![false; narcs];
    let mut count = 0;
    for a in 0..narcs {
        if seen[a] {
            continue;
        }
        count += 1;
        let mut cur = a;
        while !seen[cur] {
            seen[cur] = true;
            let (c, p) = emb.arc_ends[cur].1;
            cur = crossings[c][((p + 2) % 4) as usize] as usize - 1;
        }
    }
    count
}

/// Parses the text grammar `PD[X[a,b,c,d],...]` (with optional `;O[cw]` records)
/// or the JSON form.
pub fn parse_pd(text: &str) -> Result<PdCode> {
    let t = text.trim();
    if t.starts_with('{') {
        return parse_pd_json(t);
    }
    let compact: String = t.chars().filter(|c| !c.is_whitespace()).collect();
    let mut parts = compact.split(';');
    let head = parts.next().unwrap_or("");
    let inner = head
        .strip_prefix("PD[")
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| Error::Parse(format!("expected PD[...], found {head:?}")))?;
    let mut crossings = Vec::new();
    let mut rest = inner;
    while !rest.is_empty() {
        let body = rest
            .strip_prefix("X[")
            .ok_or_else(|| Error::Parse(format!("expected X[ at {rest:?}")))?;
        let close = body.find(']').ok_or_else(|| Error::Parse("unterminated X[".into()))?;
        let nums: Vec<u32> = body[..close]
            .split(',')
            .map(|s| s.parse::<u32>().map_err(|_| Error::Parse(format!("bad arc label {s:?}"))))
            .collect::<Result<_>>()?;
        if nums.len() != 4 {
            return Err(Error::Parse(format!("crossing with {} labels", nums.len())));
        }
        crossings.push([nums[0], nums[1], nums[2], nums[3]]);
        rest = &body[close + 1..];
        rest = rest.strip_prefix(',').unwrap_or(rest);
        if rest.is_empty() && body[close + 1..].starts_with(',') {
            return Err(Error::Parse("trailing comma".into()));
        }
    }
    let mut unknots = Vec::new();
    for part in parts {
        if part.is_empty() {
            continue;
        }
        let body = part
            .strip_prefix("O[")
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(|| Error::Parse(format!("expected O[cw] or O[ccw], found {part:?}")))?;
        let mut fields = body.split(',');
        let rotation = parse_rotation(fields.next().unwrap_or(""))?;
        let face = match fields.next() {
            None => None,
            Some(f) => Some(f.parse::<usize>().map_err(|_| Error::Parse(format!("bad face {f:?}")))?),
        };
        if fields.next().is_some() {
            return Err(Error::Parse(format!("too many fields in {part:?}")));
        }
        unknots.push(UnknotRecord { rotation, face });
    }
    PdCode::new(crossings, unknots, None)
}

fn parse_rotation(s: &str) -> Result<Rotation> {
    match s {
        "cw" => Ok(Rotation::Cw),
        "ccw" => Ok(Rotation::Ccw),
        _ => Err(Error::Parse(format!("unknown rotation {s:?}"))),
    }
}

fn parse_pd_json(t: &str) -> Result<PdCode> {
    let v: Value = serde_json::from_str(t).map_err(|e| Error::Parse(e.to_string()))?;
    let obj = v.as_object().ok_or_else(|| Error::Parse("expected a JSON object".into()))?;
    let mut crossings = Vec::new();
    if let Some(xs) = obj.get("crossings") {
        let xs = xs.as_array().ok_or_else(|| Error::Parse("crossings must be an array".into()))?;
        for x in xs {
            let a = x
                .as_array()
                .filter(|a| a.len() == 4)
                .ok_or_else(|| Error::Parse("each crossing must have 4 labels".into()))?;
            let mut out = [0u32; 4];
            for (k, e) in a.iter().enumerate() {
                out[k] = e
                    .as_u64()
                    .and_then(|n| u32::try_from(n).ok())
                    .ok_or_else(|| Error::Parse(format!("bad arc label {e}")))?;
            }
            crossings.push(out);
        }
    }
    let mut unknots = Vec::new();
    if let Some(us) = obj.get("unknots") {
        let us = us.as_array().ok_or_else(|| Error::Parse("unknots must be an array".into()))?;
        for u in us {
            let rec = match u {
                Value::String(s) => UnknotRecord { rotation: parse_rotation(s)?, face: None },
                Value::Object(_) => serde_json::from_value(u.clone()).map_err(|e| Error::Parse(e.to_string()))?,
                _ => return Err(Error::Parse(format!("bad unknot record {u}"))),
            };
            unknots.push(rec);
        }
    }
    let outer_face = match obj.get("outer_face") {
        None | Some(Value::Null) => None,
        Some(k) => Some(k.as_u64().ok_or_else(|| Error::Parse("outer_face must be an integer".into()))? as usize),
    };
    PdCode::new(crossings, unknots, outer_face)
}

/// Builds the oriented diagram with faces and coloring. An explicit
/// `outer_face` takes precedence over the one recorded in the code.
pub fn build_diagram(pd: &PdCode, outer_face: Option<usize>) -> Result<Diagram> {
    let choice = match outer_face.or(pd.outer_face) {
        Some(k) => OuterChoice::Face(k),
        None => OuterChoice::Default,
    };
    Diagram::build(pd, &choice)
}

/// The white-on-left flow of every segment.
pub fn canonical_flow(d: &Diagram) -> Flow {
    Flow { values: (0..d.n_segments()).map(|s| d.segment_flow(s)).collect() }
}

impl Diagram {
    pub fn build(pd: &PdCode, choice: &OuterChoice) -> Result<Diagram> {
        let emb = Embedding::new(&pd.crossings)?;
        let n = pd.crossings.len();
        let narcs = 2 * n;
        let nfaces = emb.faces.len();

        // one outer face per connected piece
        let mut piece_outer: Vec<Option<usize>> = vec![None; emb.pieces];
        match choice {
            OuterChoice::Default => {}
            OuterChoice::Face(k) => {
                if n == 0 {
                    if *k != 0 {
                        return Err(Error::Invalid(format!("face {k} does not exist")));
                    }
                } else {
                    if *k >= nfaces {
                        return Err(Error::Invalid(format!("face {k} does not exist")));
                    }
                    piece_outer[emb.face_piece[*k]] = Some(*k);
                }
            }
            OuterChoice::Flows(refs) => {
                for &(a, f) in refs {
                    if a >= narcs {
                        continue;
                    }
                    let piece = emb.crossing_piece[emb.arc_ends[a].0 .0];
                    if piece_outer[piece].is_none() {
                        piece_outer[piece] = Some(if f > 0 { emb.left_face(a) } else { emb.right_face(a) });
                    }
                }
            }
        }
        for a in 0..narcs {
            let piece = emb.crossing_piece[emb.arc_ends[a].0 .0];
            if piece_outer[piece].is_none() {
                piece_outer[piece] = Some(emb.right_face(a));
            }
        }

        // checkerboard coloring by breadth-first search over face adjacency
        let mut color: Vec<Option<Color>> = vec![None; nfaces];
        for outer in piece_outer.iter().flatten() {
            color[*outer] = Some(Color::White);
            let mut queue = std::collections::VecDeque::from([*outer]);
            while let Some(f) = queue.pop_front() {
                let cf = color[f].unwrap();
                for d in &emb.faces[f] {
                    let other = emb.dart_face[2 * d.seg + if d.fwd { 1 } else { 0 }];
                    match color[other] {
                        None => {
                            color[other] = Some(cf.flip());
                            queue.push_back(other);
                        }
                        Some(c) if c == cf => {
                            return Err(Error::Invalid("faces do not admit a checkerboard coloring".into()));
                        }
                        _ => {}
                    }
                }
            }
        }

        let mut regions: Vec<Region> = emb
            .faces
            .iter()
            .enumerate()
            .map(|(id, b)| Region { id, boundary: b.clone(), color: color[id].unwrap(), is_outer: false })
            .collect();
        let outer = if n == 0 {
            regions.push(Region { id: 0, boundary: Vec::new(), color: Color::White, is_outer: true });
            0
        } else {
            let o = piece_outer[emb.crossing_piece[0]].unwrap();
            regions[o].is_outer = true;
            o
        };
        let base_regions = regions.len();

        let arcs: Vec<Arc> = (0..narcs)
            .map(|a| {
                let left = emb.left_face(a);
                Arc {
                    label: a as u32 + 1,
                    from: emb.arc_ends[a].0,
                    to: emb.arc_ends[a].1,
                    flow: regions[left].color.sign(),
                }
            })
            .collect();
        if let OuterChoice::Flows(refs) = choice {
            for &(a, f) in refs {
                if a < narcs && arcs[a].flow != f {
                    return Err(Error::Invalid(format!("flow of arc {} cannot be preserved", a + 1)));
                }
            }
        }

        let mut unknots = Vec::new();
        for (k, u) in pd.unknots.iter().enumerate() {
            let container = match u.face {
                None => outer,
                Some(f) if f < base_regions => f,
                Some(f) => {
                    return Err(Error::Unsupported(format!(
                        "unknot {k} placed in region {f}, which is not a face of the crossing diagram"
                    )))
                }
            };
            let ccol = regions[container].color;
            let interior = regions.len();
            let seg = narcs + k;
            regions.push(Region {
                id: interior,
                boundary: vec![Dart { seg, fwd: u.rotation == Rotation::Ccw }],
                color: ccol.flip(),
                is_outer: false,
            });
            let flow = match u.rotation {
                Rotation::Cw => ccol.sign(),
                Rotation::Ccw => -ccol.sign(),
            };
            unknots.push(Unknot { rotation: u.rotation, container, interior, flow });
        }

        let crossings: Vec<Crossing> = pd
            .crossings
            .iter()
            .enumerate()
            .map(|(id, x)| {
                let incoming = emb.incoming[id];
                // positive iff the over-strand runs from port 3 to port 1
                let sign = if incoming[3] { 1 } else { -1 };
                Crossing { id, arcs: *x, sign, incoming }
            })
            .collect();
        let n_plus = crossings.iter().filter(|c| c.sign > 0).count();
        let arc_faces = (0..narcs).map(|a| [emb.left_face(a), emb.right_face(a)]).collect();
        Ok(Diagram {
            pd: pd.clone(),
            n_plus,
            n_minus: n - n_plus,
            crossings,
            arcs,
            unknots,
            regions,
            outer,
            arc_faces,
            crossing_piece: emb.crossing_piece.clone(),
            link_components: pd.component_count(),
        })
    }

    pub fn n_crossings(&self) -> usize {
        self.crossings.len()
    }

    /// Segments are the arcs (index = label - 1) followed by the unknots.
    pub fn n_segments(&self) -> usize {
        self.arcs.len() + self.unknots.len()
    }

    pub fn segment_flow(&self, s: usize) -> i8 {
        if s < self.arcs.len() {
            self.arcs[s].flow
        } else {
            self.unknots[s - self.arcs.len()].flow
        }
    }

    /// Arc index at a crossing port.
    pub fn arc_at(&self, c: usize, p: u8) -> usize {
        self.crossings[c].arcs[p as usize] as usize - 1
    }

    /// Flow of the strand to the left of the oriented 2-labelled edge at a crossing.
    pub fn site_flow(&self, c: usize) -> i8 {
        let port = if self.crossings[c].sign > 0 { 3 } else { 0 };
        self.arcs[self.arc_at(c, port)].flow
    }

    /// Regions on the left and right of a segment.
    pub fn segment_faces(&self, s: usize) -> [usize; 2] {
        if s < self.arcs.len() {
            self.arc_faces[s]
        } else {
            let u = &self.unknots[s - self.arcs.len()];
            match u.rotation {
                Rotation::Cw => [u.container, u.interior],
                Rotation::Ccw => [u.interior, u.container],
            }
        }
    }

    /// Faces of the crossing diagram (or the single outer region), excluding unknot interiors.
    pub fn n_base_regions(&self) -> usize {
        self.regions.len() - self.unknots.len()
    }

    /// Stable identifier of the input code and coloring.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.pd.to_text().as_bytes());
        h.update(format!(";outer={}", self.outer).as_bytes());
        let digest = h.finalize();
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TREFOIL: &str = "PD[X[1,4,2,5],X[3,6,4,1],X[5,2,6,3]]";
    const HOPF: &str = "PD[X[1,3,2,4],X[3,1,4,2]]";

    /// Independent face count: orbits of the permutation "next dart around the face".
    fn brute_face_count(pd: &PdCode) -> usize {
        let x = &pd.crossings;
        // darts as (crossing, port) pairs leaving along the port; sigma rotates, alpha flips
        let mut seen = std::collections::HashSet::new();
        let mut count = 0;
        for c in 0..x.len() {
            for p in 0..4u8 {
                if seen.contains(&(c, p)) {
                    continue;
                }
                count += 1;
                let mut cur = (c, p);
                while seen.insert(cur) {
                    // follow the arc to its other end, then turn to the clockwise neighbour
                    let label = x[cur.0][cur.1 as usize];
                    let mut other = None;
                    for (c2, xx) in x.iter().enumerate() {
                        for p2 in 0..4u8 {
                            if xx[p2 as usize] == label && (c2, p2) != cur {
                                other = Some((c2, p2));
                            }
                        }
                    }
                    let (c2, p2) = other.unwrap();
                    cur = (c2, (p2 + 3) % 4);
                }
            }
        }
        count
    }

    #[test]
    fn parses_trefoil() {
        let pd = parse_pd(TREFOIL).unwrap();
        assert_eq!(pd.crossings.len(), 3);
        assert_eq!(pd.component_count(), 1);
    }

    #[test]
    fn parses_empty_and_rejects_bad_multiplicity() {
        let pd = parse_pd("PD[]").unwrap();
        assert!(pd.crossings.is_empty());
        assert!(parse_pd("PD[X[1,2,3,4]]").is_err());
        assert!(parse_pd("PD[X[1,1,2,2]]").is_ok());
        assert!(matches!(parse_pd("PD[X[1,2]"), Err(Error::Parse(_))));
    }

    #[test]
    fn labels_are_normalized() {
        let pd = parse_pd("PD[X[10,40,20,50],X[30,60,40,10],X[50,20,60,30]]").unwrap();
        assert_eq!(pd.crossings, parse_pd(TREFOIL).unwrap().crossings);
    }

    #[test]
    fn json_form_matches_text() {
        let a = parse_pd(r#"{"crossings":[[1,4,2,5],[3,6,4,1],[5,2,6,3]],"unknots":["cw"]}"#).unwrap();
        let b = parse_pd(&format!("{TREFOIL};O[cw]")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trefoil_faces_and_signs() {
        let pd = parse_pd(TREFOIL).unwrap();
        let d = build_diagram(&pd, None).unwrap();
        assert_eq!(d.regions.len(), 5);
        assert_eq!(brute_face_count(&pd), 5);
        assert_eq!(d.n_plus + d.n_minus, 3);
        // this table code is the left-handed trefoil
        assert_eq!(d.n_minus, 3);
    }

    #[test]
    fn knot_table_trefoil_is_positive() {
        let d = build_diagram(&parse_pd("PD[X[1,5,2,4],X[3,1,4,6],X[5,3,6,2]]").unwrap(), None).unwrap();
        assert_eq!(d.n_plus, 3);
    }

    #[test]
    fn hopf_faces_and_signs() {
        let pd = parse_pd(HOPF).unwrap();
        let d = build_diagram(&pd, None).unwrap();
        assert_eq!(d.regions.len(), 4);
        assert_eq!(brute_face_count(&pd), 4);
        assert_eq!(d.crossings[0].sign, d.crossings[1].sign);
        assert_eq!(d.link_components, 2);
    }

    #[test]
    fn empty_diagram_has_one_white_outer_face() {
        let d = build_diagram(&parse_pd("PD[]").unwrap(), None).unwrap();
        assert_eq!(d.regions.len(), 1);
        assert!(d.regions[0].is_outer);
        assert_eq!(d.regions[0].color, Color::White);
    }

    #[test]
    fn unknot_flows() {
        let d = build_diagram(&parse_pd("PD[];O[cw];O[ccw]").unwrap(), None).unwrap();
        assert_eq!(canonical_flow(&d).values, vec![1, -1]);
    }

    #[test]
    fn white_on_left_rule_and_admissibility() {
        for code in [TREFOIL, HOPF, "PD[X[4,2,5,1],X[8,6,1,5],X[6,3,7,4],X[2,7,3,8]]"] {
            let d = build_diagram(&parse_pd(code).unwrap(), None).unwrap();
            for (a, arc) in d.arcs.iter().enumerate() {
                let left = d.arc_faces[a][0];
                assert_eq!(arc.flow, d.regions[left].color.sign());
            }
            for c in 0..d.n_crossings() {
                // incoming strands carry opposite flows, so do outgoing ones
                let ins: Vec<usize> = (0..4).filter(|&p| d.crossings[c].incoming[p]).collect();
                let outs: Vec<usize> = (0..4).filter(|&p| !d.crossings[c].incoming[p]).collect();
                let f = |p: usize| d.arcs[d.arc_at(c, p as u8)].flow;
                assert_eq!(f(ins[0]), -f(ins[1]));
                assert_eq!(f(outs[0]), -f(outs[1]));
            }
        }
    }

    #[test]
    fn outer_face_override_and_errors() {
        let pd = parse_pd(TREFOIL).unwrap();
        let d0 = build_diagram(&pd, None).unwrap();
        for k in 0..5 {
            let d = build_diagram(&pd, Some(k)).unwrap();
            assert!(d.regions[k].is_outer);
            assert_eq!(d.regions[k].color, Color::White);
            let flipped = d.arcs.iter().zip(&d0.arcs).all(|(a, b)| a.flow == -b.flow);
            let same = d.arcs.iter().zip(&d0.arcs).all(|(a, b)| a.flow == b.flow);
            assert!(flipped || same);
        }
        assert!(build_diagram(&pd, Some(5)).is_err());
    }

    #[test]
    fn default_outer_face_is_right_of_arc_one() {
        let d = build_diagram(&parse_pd(TREFOIL).unwrap(), None).unwrap();
        assert_eq!(d.outer, d.arc_faces[0][1]);
        assert_eq!(d.arcs[0].flow, -1);
    }
}
