//! Signed Burnside functor of the cube: correspondences, face 2-morphisms with
//! ladybug matchings, hexagon verification and the diagonal comparison.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::cube::{Resolution, Vertex};
use crate::diagram::Diagram;
use crate::differential::{ChainComplex, Check, CubeComplex, EdgeMap};
use crate::error::{Error, Result};
use crate::generators::labels_to_index;

/// Element of a composite correspondence: (source, middle, target) generator indices.
pub type Triple = (u32, u32, u32);

/// Element of a correspondence with its sign.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Element {
    pub source: u32,
    pub target: u32,
    pub sign: i8,
}

#[derive(Clone, Debug, Serialize)]
pub struct SignedCorrespondence {
    pub from: Vertex,
    pub to: Vertex,
    pub elements: Vec<Element>,
}

impl SignedCorrespondence {
    pub fn from_edge(e: &EdgeMap) -> SignedCorrespondence {
        let elements = e
            .cols
            .iter()
            .enumerate()
            .flat_map(|(x, col)| col.iter().map(move |&(y, s)| Element { source: x as u32, target: y, sign: s }))
            .collect();
        SignedCorrespondence { from: e.src, to: e.dst(), elements }
    }
}

/// Ladybug data at the bottom vertex of a face.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LadybugConfig {
    /// Circle at the bottom vertex cut by both chords.
    pub circle: usize,
    /// Crossings of the first (a) and second (b) surgery.
    pub a: usize,
    pub b: usize,
    /// Whether the circle's stored traversal had to be reversed to put chord a on its left.
    pub reversed: bool,
    /// Pass indices on the circle in the oriented cyclic order p1(a), p2(b), p3(a), p4(b).
    pub passes: [usize; 4],
    /// Circles after surgery on a: A2 (through p2) and A4 (through p4).
    pub a_circles: [usize; 2],
    /// Circles after surgery on b: B1 (through p1) and B3 (through p3).
    pub b_circles: [usize; 2],
}

/// Recognizes a ladybug: both surgeries split the same circle, their chords
/// interleave on it and the top vertex has the bottom's circle count again.
pub fn detect_ladybug(
    bottom: &Resolution,
    via_a: &Resolution,
    via_b: &Resolution,
    top: &Resolution,
    a: usize,
    b: usize,
) -> Option<LadybugConfig> {
    let k = bottom.n_circles();
    if via_a.n_circles() != k + 1 || via_b.n_circles() != k + 1 || top.n_circles() != k {
        return None;
    }
    let ca = bottom.circles.iter().position(|c| c.passes.iter().any(|p| p.crossing == a))?;
    let cb = bottom.circles.iter().position(|c| c.passes.iter().any(|p| p.crossing == b))?;
    if ca != cb {
        return None;
    }
    let circle = &bottom.circles[ca];
    let n = circle.passes.len();
    let first_a = circle.passes.iter().position(|p| p.crossing == a)?;
    let reversed = !circle.passes[first_a].chord_on_left();
    // positions of the chord endpoints in the oriented order
    let order: Vec<usize> = if reversed { (0..n).rev().collect() } else { (0..n).collect() };
    let marks: Vec<(usize, usize)> = order
        .iter()
        .filter(|&&t| circle.passes[t].crossing == a || circle.passes[t].crossing == b)
        .map(|&t| (t, circle.passes[t].crossing))
        .collect();
    if marks.len() != 4 {
        return None;
    }
    let start = marks.iter().position(|m| m.1 == a)?;
    let cyc: Vec<(usize, usize)> = (0..4).map(|s| marks[(start + s) % 4]).collect();
    if cyc[1].1 != b || cyc[2].1 != a || cyc[3].1 != b {
        return None;
    }
    let passes = [cyc[0].0, cyc[1].0, cyc[2].0, cyc[3].0];
    let seg = |t: usize| circle.darts[t].seg;
    let a_circles = [via_a.seg_circle[seg(passes[1])], via_a.seg_circle[seg(passes[3])]];
    let b_circles = [via_b.seg_circle[seg(passes[0])], via_b.seg_circle[seg(passes[2])]];
    if a_circles[0] == a_circles[1] || b_circles[0] == b_circles[1] {
        return None;
    }
    Some(LadybugConfig { circle: ca, a, b, reversed, passes, a_circles, b_circles })
}

/// The matching A2 <-> B3, A4 <-> B1 as (a-side circle, b-side circle) pairs.
pub fn ladybug_match(cfg: &LadybugConfig) -> [(usize, usize); 2] {
    [(cfg.a_circles[0], cfg.b_circles[1]), (cfg.a_circles[1], cfg.b_circles[0])]
}

/// The signed Burnside functor of a certified cube complex.
pub struct BurnsideFunctor<'a> {
    pub cc: &'a CubeComplex,
    pub vertex_sizes: Vec<usize>,
}

pub fn build_functor(cc: &CubeComplex) -> BurnsideFunctor<'_> {
    let vertex_sizes = (0..cc.cube.n_vertices()).map(|u| 1usize << cc.cube.resolution(u as Vertex).n_circles()).collect();
    BurnsideFunctor { cc, vertex_sizes }
}

/// Bijection from the composite along (a then b) to the composite along (b then a),
/// keyed by elements of the first.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TwoMorphism {
    pub map: HashMap<Triple, u32>,
    pub ladybug: bool,
}

fn composite(first: &EdgeMap, second: &EdgeMap) -> Vec<(Triple, i8)> {
    let mut out = Vec::new();
    for (x, col) in first.cols.iter().enumerate() {
        for &(y, s1) in col {
            for &(z, s2) in &second.cols[y as usize] {
                out.push(((x as u32, y, z), s1 * s2));
            }
        }
    }
    out
}

impl BurnsideFunctor<'_> {
    pub fn n(&self) -> usize {
        self.cc.cube.n()
    }

    pub fn correspondence(&self, u: Vertex, i: usize) -> SignedCorrespondence {
        SignedCorrespondence::from_edge(self.cc.edge(u, i))
    }

    pub fn ladybug(&self, u: Vertex, a: usize, b: usize) -> Option<LadybugConfig> {
        let cube = &self.cc.cube;
        detect_ladybug(
            &cube.resolution(u),
            &cube.resolution(u | 1 << a),
            &cube.resolution(u | 1 << b),
            &cube.resolution(u | 1 << a | 1 << b),
            a,
            b,
        )
    }

    /// 2-morphism of the face at u from the path through u + e_a to the path through u + e_b.
    pub fn face_two_morphism(&self, u: Vertex, a: usize, b: usize) -> Result<TwoMorphism> {
        let p = composite(self.cc.edge(u, a), self.cc.edge(u | 1 << a, b));
        let q = composite(self.cc.edge(u, b), self.cc.edge(u | 1 << b, a));
        let mut fibers: HashMap<(u32, u32), (Vec<(u32, i8)>, Vec<(u32, i8)>)> = HashMap::new();
        for ((x, y, z), s) in p {
            fibers.entry((x, z)).or_default().0.push((y, s));
        }
        for ((x, y, z), s) in q {
            fibers.entry((x, z)).or_default().1.push((y, s));
        }
        let cfg = self.ladybug(u, a, b);
        let via_a = self.cc.cube.resolution(u | 1 << a);
        let via_b = self.cc.cube.resolution(u | 1 << b);
        let mut map = HashMap::new();
        let face = || format!("face at {u:b} through crossings {a},{b}");
        for ((x, z), (left, right)) in fibers {
            if left.len() != right.len() {
                return Err(Error::Verification(format!("{}: fiber sizes {} and {}", face(), left.len(), right.len())));
            }
            match left.len() {
                1 => {
                    if left[0].1 != right[0].1 {
                        return Err(Error::Verification(format!("{}: no sign-preserving bijection", face())));
                    }
                    map.insert((x, left[0].0, z), right[0].0);
                }
                2 => {
                    let cfg = cfg.as_ref().ok_or_else(|| {
                        Error::Verification(format!("{}: doubled fiber outside a ladybug", face()))
                    })?;
                    if left[0].1 != left[1].1 || right[0].1 != right[1].1 || left[0].1 != right[0].1 {
                        return Err(Error::Verification(format!("{}: ladybug fiber signs differ", face())));
                    }
                    let matching = ladybug_match(cfg);
                    let ka = via_a.n_circles();
                    for &(y, _) in &left {
                        let labels = crate::generators::index_to_labels(y as usize, ka);
                        // the a-side circle carrying X picks its partner on the b side
                        let (_, partner) =
                            *matching.iter().find(|(ac, _)| labels >> ac & 1 == 1).ok_or_else(|| {
                                Error::Verification(format!("{}: ladybug element without X", face()))
                            })?;
                        let kb = via_b.n_circles();
                        let target = right
                            .iter()
                            .find(|(y2, _)| crate::generators::index_to_labels(*y2 as usize, kb) >> partner & 1 == 1)
                            .ok_or_else(|| Error::Verification(format!("{}: unmatched ladybug element", face())))?;
                        map.insert((x, y, z), target.0);
                    }
                }
                _ => {
                    return Err(Error::Verification(format!("{}: fiber of size {}", face(), left.len())));
                }
            }
        }
        Ok(TwoMorphism { map, ladybug: cfg.is_some() })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HexagonReport {
    pub faces: Check,
    pub ladybug_faces: usize,
    pub inverse_condition: Check,
    pub hexagons: Check,
}

impl HexagonReport {
    pub fn ok(&self) -> bool {
        self.faces.ok() && self.inverse_condition.ok() && self.hexagons.ok()
    }
}

fn vertex_name(u: Vertex, n: usize) -> String {
    (0..n).map(|i| if u >> i & 1 == 1 { '1' } else { '0' }).collect()
}

/// Checks F(u,v',v,w) = F(u,v,v',w)^-1 on every face and the hexagon on every 3-subcube.
pub fn verify_hexagons(f: &BurnsideFunctor) -> HexagonReport {
    let n = f.n();
    let faces = f.cc.cube.faces();
    let results: Vec<(Result<TwoMorphism>, Result<TwoMorphism>)> = faces
        .par_iter()
        .map(|&(u, i, j)| (f.face_two_morphism(u, i, j), f.face_two_morphism(u, j, i)))
        .collect();
    let mut table: HashMap<(Vertex, usize, usize), TwoMorphism> = HashMap::new();
    let mut face_fail = Vec::new();
    let mut inv_fail = Vec::new();
    let mut ladybugs = 0;
    for (&(u, i, j), (fw, bw)) in faces.iter().zip(results) {
        match (fw, bw) {
            (Ok(fw), Ok(bw)) => {
                if fw.ladybug {
                    ladybugs += 1;
                }
                let inverse = fw.map.iter().all(|(&(x, y, z), &y2)| bw.map.get(&(x, y2, z)) == Some(&y))
                    && fw.map.len() == bw.map.len();
                if !inverse {
                    inv_fail.push(format!("face {} ({i},{j})", vertex_name(u, n)));
                }
                table.insert((u, i, j), fw);
                table.insert((u, j, i), bw);
            }
            (Err(e), _) | (_, Err(e)) => face_fail.push(e.to_string()),
        }
    }

    let mut cubes = Vec::new();
    for u in 0..f.cc.cube.n_vertices() as Vertex {
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    if u >> i & 1 == 0 && u >> j & 1 == 0 && u >> k & 1 == 0 {
                        cubes.push((u, i, j, k));
                    }
                }
            }
        }
    }
    // hexagons need every face bijection
    let hex_fail: Vec<String> = if face_fail.is_empty() {
        cubes
            .par_iter()
            .filter_map(|&(u, i, j, k)| hexagon(f, &table, u, [i, j, k]).err())
            .collect()
    } else {
        Vec::new()
    };
    let hex_checked = if face_fail.is_empty() { cubes.len() } else { 0 };
    HexagonReport {
        faces: check(faces.len(), face_fail),
        ladybug_faces: ladybugs,
        inverse_condition: check(faces.len(), inv_fail),
        hexagons: check(hex_checked, hex_fail),
    }
}

fn check(checked: usize, failures: Vec<String>) -> Check {
    let mut failures = failures;
    failures.sort();
    let status = if checked == 0 && failures.is_empty() {
        crate::differential::Status::Vacuous
    } else if failures.is_empty() {
        crate::differential::Status::Pass
    } else {
        crate::differential::Status::Fail
    };
    failures.truncate(20);
    Check { status, checked, failures }
}

/// Walks every element of the path i,j,k around the six faces and back.
fn hexagon(
    f: &BurnsideFunctor,
    table: &HashMap<(Vertex, usize, usize), TwoMorphism>,
    u: Vertex,
    [i, j, k]: [usize; 3],
) -> std::result::Result<(), String> {
    let e = |v: Vertex, c: usize| f.cc.edge(v, c);
    // elements of the path i, j, k: (x, y1, y2, z)
    let mut start = Vec::new();
    let (e1, e2, e3) = (e(u, i), e(u | 1 << i, j), e(u | 1 << i | 1 << j, k));
    for (x, col) in e1.cols.iter().enumerate() {
        for &(y1, _) in col {
            for &(y2, _) in &e2.cols[y1 as usize] {
                for &(z, _) in &e3.cols[y2 as usize] {
                    start.push((x as u32, y1, y2, z));
                }
            }
        }
    }
    let swap_last = |order: [usize; 3], el: (u32, u32, u32, u32)| -> Option<(u32, u32, u32, u32)> {
        let v = u | 1 << order[0];
        let y2 = *table.get(&(v, order[1], order[2]))?.map.get(&(el.1, el.2, el.3))?;
        Some((el.0, el.1, y2, el.3))
    };
    let swap_first = |order: [usize; 3], el: (u32, u32, u32, u32)| -> Option<(u32, u32, u32, u32)> {
        let y1 = *table.get(&(u, order[0], order[1]))?.map.get(&(el.0, el.1, el.2))?;
        Some((el.0, y1, el.2, el.3))
    };
    for el in start {
        let mut cur = el;
        let steps: [(bool, [usize; 3]); 6] = [
            (false, [i, j, k]),
            (true, [i, k, j]),
            (false, [k, i, j]),
            (true, [k, j, i]),
            (false, [j, k, i]),
            (true, [j, i, k]),
        ];
        for (first, order) in steps {
            let next = if first { swap_first(order, cur) } else { swap_last(order, cur) };
            cur = next.ok_or_else(|| {
                format!("subcube at {} ({i},{j},{k}): element leaves the correspondence", vertex_name(u, f.n()))
            })?;
        }
        if cur != el {
            return Err(format!("subcube at {} ({i},{j},{k}): hexagon is not the identity", vertex_name(u, f.n())));
        }
    }
    Ok(())
}

/// Ladybug-aware counts of a functor for reports.
pub fn ladybug_faces(f: &BurnsideFunctor) -> Vec<(Vertex, usize, usize)> {
    f.cc.cube.faces().into_iter().filter(|&(u, i, j)| f.ladybug(u, i, j).is_some()).collect()
}

/// Per-generator signs with phi(target) phi(source) kh = or on every entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Phi {
    pub h_min: i64,
    pub signs: Vec<Vec<i8>>,
}

impl Phi {
    /// Conjugates a complex by the diagonal matrix.
    pub fn conjugate(&self, c: &ChainComplex) -> ChainComplex {
        let mut out = c.clone();
        for (k, m) in c.d.iter().enumerate() {
            let t: Vec<(usize, usize, i64)> = m
                .triplets()
                .into_iter()
                .map(|(r, col, v)| (r, col, v * self.signs[k + 1][r] as i64 * self.signs[k][col] as i64))
                .collect();
            out.d[k] = crate::sparse::SparseMat::from_triplets(m.nrows, m.ncols, t);
        }
        out
    }

    pub fn to_json(&self) -> Value {
        json!({"h_min": self.h_min, "signs": self.signs})
    }
}

pub fn solve_diagonal_phi(c_or: &ChainComplex, c_kh: &ChainComplex) -> Result<Phi> {
    if c_or.groups != c_kh.groups {
        return Err(Error::Invalid("complexes have different generators".into()));
    }
    let ng = c_or.groups.len();
    // adjacency: (degree, index) -> [(degree, index, relation sign)]
    let mut adj: Vec<Vec<Vec<(usize, usize, i8)>>> = c_or.groups.iter().map(|g| vec![Vec::new(); g.len()]).collect();
    for k in 0..c_or.d.len() {
        let (a, b) = (&c_or.d[k], &c_kh.d[k]);
        let ta = a.triplets();
        let tb = b.triplets();
        if ta.len() != tb.len() {
            return Err(Error::Verification(format!("support differs in degree {}", c_or.h_min + k as i64)));
        }
        for (&(r, c, v), &(r2, c2, w)) in ta.iter().zip(&tb) {
            if (r, c) != (r2, c2) || v.abs() != w.abs() || v.abs() != 1 {
                return Err(Error::Verification(format!(
                    "entries differ beyond sign in degree {} at ({r},{c})",
                    c_or.h_min + k as i64
                )));
            }
            let rel = (v * w) as i8;
            adj[k][c].push((k + 1, r, rel));
            adj[k + 1][r].push((k, c, rel));
        }
    }
    let mut signs: Vec<Vec<i8>> = c_or.groups.iter().map(|g| vec![0; g.len()]).collect();
    for k0 in 0..ng {
        for g0 in 0..signs[k0].len() {
            if signs[k0][g0] != 0 {
                continue;
            }
            signs[k0][g0] = 1;
            let mut queue = std::collections::VecDeque::from([(k0, g0)]);
            while let Some((k, g)) = queue.pop_front() {
                for &(k2, g2, rel) in &adj[k][g] {
                    let want = signs[k][g] * rel;
                    if signs[k2][g2] == 0 {
                        signs[k2][g2] = want;
                        queue.push_back((k2, g2));
                    } else if signs[k2][g2] != want {
                        return Err(Error::Verification(format!(
                            "no diagonal sign change: conflict at generator {g2} in degree {}",
                            c_or.h_min + k2 as i64
                        )));
                    }
                }
            }
        }
    }
    Ok(Phi { h_min: c_or.h_min, signs })
}

#[derive(Clone, Debug, Serialize)]
pub struct BurnsideReport {
    pub vertices: usize,
    pub correspondences: usize,
    pub faces: usize,
    pub subcubes: usize,
    pub hexagon: HexagonReport,
    pub phi: Check,
    pub conjugation_exact: bool,
}

impl BurnsideReport {
    pub fn ok(&self) -> bool {
        self.hexagon.ok() && self.phi.ok() && self.conjugation_exact
    }
}

/// Full functor-level report for a diagram, comparing against the plain complex.
pub fn burnside_report(cc: &CubeComplex, plain: &ChainComplex) -> (BurnsideReport, Option<Phi>) {
    let f = build_functor(cc);
    let hexagon = verify_hexagons(&f);
    let n = cc.cube.n();
    let subcubes = if n >= 3 { n * (n - 1) * (n - 2) / 6 * (1 << (n - 3)) } else { 0 };
    let (phi, phi_check, exact) = match solve_diagonal_phi(&cc.complex, plain) {
        Ok(p) => {
            let exact = p.conjugate(&cc.complex).d == plain.d;
            (Some(p), check(cc.complex.rank(), Vec::new()), exact)
        }
        Err(e) => (None, check(cc.complex.rank(), vec![e.to_string()]), false),
    };
    let report = BurnsideReport {
        vertices: cc.cube.n_vertices(),
        correspondences: cc.edges.len(),
        faces: cc.cube.faces().len(),
        subcubes,
        hexagon,
        phi: phi_check,
        conjugation_exact: exact,
    };
    (report, phi)
}

/// Generator index of a labeling, exposed for fixtures.
pub fn label_index(labels: u64, k: usize) -> u32 {
    labels_to_index(labels, k) as u32
}

/// JSON dump of the functor: vertex sets, correspondences and face bijections.
pub fn functor_json(f: &BurnsideFunctor) -> Result<Value> {
    let n = f.n();
    let d: &Diagram = f.cc.diagram();
    let vertices: Vec<Value> = (0..f.cc.cube.n_vertices())
        .map(|u| json!({"vertex": vertex_name(u as Vertex, n), "size": f.vertex_sizes[u]}))
        .collect();
    let edges: Vec<Value> = f
        .cc
        .edges
        .iter()
        .map(|e| {
            let c = SignedCorrespondence::from_edge(e);
            json!({
                "from": vertex_name(c.from, n),
                "to": vertex_name(c.to, n),
                "elements": c.elements.iter().map(|x| json!([x.source, x.target, x.sign])).collect::<Vec<_>>(),
            })
        })
        .collect();
    let mut faces = Vec::new();
    for (u, i, j) in f.cc.cube.faces() {
        let m = f.face_two_morphism(u, i, j)?;
        let mut pairs: Vec<(Triple, u32)> = m.map.into_iter().collect();
        pairs.sort_unstable();
        faces.push(json!({
            "vertex": vertex_name(u, n),
            "crossings": [i, j],
            "ladybug": m.ladybug,
            "bijection": pairs.iter().map(|&((x, y, z), y2)| json!([x, y, z, y2])).collect::<Vec<_>>(),
        }));
    }
    Ok(json!({"diagram": d.hash(), "vertices": vertices, "correspondences": edges, "faces": faces}))
}
