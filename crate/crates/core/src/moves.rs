//! Cobordism maps (birth, death, saddle), Reidemeister retractions and movies.
//!
//! Segment arguments are 1-based labels as in the PD code (unknots follow the
//! arcs), faces are region ids of the current diagram and crossings and
//! components are 0-based.

use std::collections::{BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::burnside::solve_diagonal_phi;
use crate::cube::{carry_circles, partner, popcount, SurgeryKind, Vertex};
use crate::diagram::{build_diagram, parse_pd, strand_components, Diagram, Embedding, PdCode, Port, Rotation, UnknotRecord};
use crate::differential::{frobenius_image, ChainComplex, CubeComplex, SignRule};
use crate::error::{Error, Result};
use crate::generators::{index_to_labels, labels_to_index, Generator};
use crate::homology::{homology_basis, Elimination, InducedMap, Reduced};
use crate::sparse::SparseMat;

pub use crate::homology::ChainMap;

// ---------------------------------------------------------------------------
// Rewiring diagrams

/// Region holding an unknot, named by a neighbouring arc.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Container {
    Outer,
    Left(usize),
    Right(usize),
}

#[derive(Clone, Debug)]
struct WArc {
    from: Port,
    to: Port,
    key: u64,
    /// Segments of the original diagram this arc descends from.
    sources: Vec<usize>,
}

#[derive(Clone, Debug)]
struct WUnknot {
    rotation: Rotation,
    container: Container,
    key: u64,
    sources: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Seg {
    Arc(usize),
    Unknot(usize),
}

/// Editable port-level description of a diagram.
#[derive(Clone, Debug)]
struct Wiring {
    n: usize,
    arcs: Vec<Option<WArc>>,
    unknots: Vec<Option<WUnknot>>,
}

struct Built {
    pd: PdCode,
    /// Original segments behind each new segment (arcs, then unknots).
    sources: Vec<Vec<usize>>,
    arc_final: Vec<Option<usize>>,
    unknot_final: Vec<Option<usize>>,
}

impl Built {
    fn old_to_new(&self, n_old: usize) -> Vec<Option<usize>> {
        let mut map = vec![None; n_old];
        for (t, src) in self.sources.iter().enumerate() {
            for &s in src {
                map[s] = Some(t);
            }
        }
        map
    }

    fn segment(&self, s: Seg) -> usize {
        match s {
            Seg::Arc(a) => self.arc_final[a].expect("live arc"),
            Seg::Unknot(k) => self.unknot_final[k].expect("live unknot"),
        }
    }
}

fn face_container(d: &Diagram, f: usize) -> Container {
    match d.regions[f].boundary.first() {
        Some(dart) if dart.fwd => Container::Left(dart.seg),
        Some(dart) => Container::Right(dart.seg),
        None => Container::Outer,
    }
}

fn opposite(p: Port) -> Port {
    (p.0, (p.1 + 2) % 4)
}

impl Wiring {
    fn from_diagram(d: &Diagram) -> Wiring {
        let narcs = d.arcs.len();
        let arcs = d
            .arcs
            .iter()
            .enumerate()
            .map(|(a, x)| Some(WArc { from: x.from, to: x.to, key: (a as u64 + 1) << 8, sources: vec![a] }))
            .collect();
        let unknots = d
            .pd
            .unknots
            .iter()
            .enumerate()
            .map(|(k, u)| {
                let container = match u.face {
                    None => Container::Outer,
                    Some(f) => face_container(d, f),
                };
                Some(WUnknot {
                    rotation: u.rotation,
                    container,
                    key: ((narcs + k) as u64 + 1) << 8,
                    sources: vec![narcs + k],
                })
            })
            .collect();
        Wiring { n: d.n_crossings(), arcs, unknots }
    }

    fn arc(&self, a: usize) -> &WArc {
        self.arcs[a].as_ref().expect("live arc")
    }

    fn arc_mut(&mut self, a: usize) -> &mut WArc {
        self.arcs[a].as_mut().expect("live arc")
    }

    fn next_key(&self) -> u64 {
        let arcs = self.arcs.iter().flatten().map(|a| a.key);
        let unknots = self.unknots.iter().flatten().map(|u| u.key);
        (arcs.chain(unknots).max().unwrap_or(0) >> 8) + 1 << 8
    }

    fn push_unknot(&mut self, rotation: Rotation, container: Container) -> usize {
        let key = self.next_key();
        self.unknots.push(Some(WUnknot { rotation, container, key, sources: Vec::new() }));
        self.unknots.len() - 1
    }

    /// Threads a segment through crossing passes `(crossing, in port, out port)`
    /// in order. The pieces between consecutive passes are interior when flagged;
    /// a closed segment is closed up by a piece carrying its key and sources.
    fn thread(&mut self, s: Seg, passes: &[(usize, u8, u8)], interior: &[bool]) {
        let m = passes.len();
        let (key, sources, ends) = match s {
            Seg::Arc(a) => {
                let w = self.arcs[a].take().expect("live arc");
                (w.key, w.sources, Some((w.from, w.to)))
            }
            Seg::Unknot(k) => {
                let w = self.unknots[k].take().expect("live unknot");
                (w.key, w.sources, None)
            }
        };
        let inner = (0..m - 1).map(|j| WArc {
            from: (passes[j].0, passes[j].2),
            to: (passes[j + 1].0, passes[j + 1].1),
            key: key + j as u64 + 1,
            sources: if interior[j] { Vec::new() } else { sources.clone() },
        });
        let inner: Vec<WArc> = inner.collect();
        let last = (passes[m - 1].0, passes[m - 1].2);
        let first = (passes[0].0, passes[0].1);
        match (s, ends) {
            (Seg::Arc(a), Some((p, q))) => {
                self.arcs[a] = Some(WArc { from: p, to: first, key, sources: sources.clone() });
                self.arcs.extend(inner.into_iter().map(Some));
                self.arcs.push(Some(WArc { from: last, to: q, key: key + m as u64, sources }));
            }
            _ => {
                self.arcs.extend(inner.into_iter().map(Some));
                self.arcs.push(Some(WArc { from: last, to: first, key, sources }));
            }
        }
    }

    fn find_arc(&self, pred: impl Fn(&WArc) -> bool) -> Option<usize> {
        (0..self.arcs.len()).find(|&a| self.arcs[a].as_ref().is_some_and(&pred))
    }

    /// Removes crossings and arcs and joins the loose ends `(in, out)` pairwise.
    fn splice(&mut self, crossings: &[usize], removed: &[usize], links: &[(Port, Port)], rot: impl Fn(usize) -> Rotation) {
        let mut redirect: HashMap<usize, Option<usize>> = HashMap::new();
        for &r in removed {
            let back = opposite(self.arc(r).from);
            let target = self.find_arc(|w| w.to == back);
            redirect.insert(r, target);
        }
        for &r in removed {
            self.arcs[r] = None;
        }
        for &(pin, pout) in links {
            let a = self.find_arc(|w| w.to == pin).expect("arc into the site");
            let b = self.find_arc(|w| w.from == pout).expect("arc out of the site");
            if a == b {
                let w = self.arcs[a].take().unwrap();
                self.unknots.push(Some(WUnknot { rotation: rot(a), container: Container::Outer, key: w.key, sources: w.sources }));
                redirect.insert(a, None);
            } else {
                let wb = self.arcs[b].take().unwrap();
                let wa = self.arc_mut(a);
                wa.to = wb.to;
                wa.sources.extend(wb.sources);
                redirect.insert(b, Some(a));
            }
        }
        let resolve = |mut a: usize| -> Option<usize> {
            let mut steps = 0;
            while let Some(&t) = redirect.get(&a) {
                a = t?;
                steps += 1;
                if steps > redirect.len() {
                    return None;
                }
            }
            Some(a)
        };
        for u in self.unknots.iter_mut().flatten() {
            u.container = match u.container {
                Container::Left(a) => resolve(a).map_or(Container::Outer, Container::Left),
                Container::Right(a) => resolve(a).map_or(Container::Outer, Container::Right),
                Container::Outer => Container::Outer,
            };
        }
        let renumber: Vec<Option<usize>> = {
            let mut next = 0;
            (0..self.n)
                .map(|c| {
                    if crossings.contains(&c) {
                        None
                    } else {
                        next += 1;
                        Some(next - 1)
                    }
                })
                .collect()
        };
        for w in self.arcs.iter_mut().flatten() {
            w.from.0 = renumber[w.from.0].expect("arc at a removed crossing");
            w.to.0 = renumber[w.to.0].expect("arc at a removed crossing");
        }
        self.n -= crossings.len();
    }

    fn embed(&self, order: &[usize]) -> Result<(Vec<[u32; 4]>, Embedding)> {
        let mut crossings = vec![[0u32; 4]; self.n];
        for (l, &a) in order.iter().enumerate() {
            let w = self.arc(a);
            for p in [w.from, w.to] {
                let slot = &mut crossings[p.0][p.1 as usize];
                if *slot != 0 {
                    return Err(Error::Invalid(format!("port {}.{} used twice", p.0, p.1)));
                }
                *slot = l as u32 + 1;
            }
        }
        if crossings.iter().flatten().any(|&l| l == 0) {
            return Err(Error::Invalid("a crossing port is left open".into()));
        }
        let emb = Embedding::new(&crossings)
            .map_err(|e| Error::Invalid(format!("move produces an invalid diagram: {e}")))?;
        Ok((crossings, emb))
    }

    /// Labels consecutive along each component, starting from the smallest key.
    /// Two-arc components listed in `flip` start from their other arc.
    fn walk_order(&self, live: &[usize], flip: &[usize]) -> Vec<usize> {
        let starts: HashMap<Port, usize> = live.iter().map(|&a| (self.arc(a).from, a)).collect();
        let mut seen = HashSet::new();
        let mut order = Vec::new();
        for &a in live {
            if seen.contains(&a) {
                continue;
            }
            let mut comp = Vec::new();
            let mut cur = a;
            while seen.insert(cur) {
                comp.push(cur);
                cur = starts[&opposite(self.arc(cur).to)];
            }
            if comp.len() == 2 && comp.iter().any(|c| flip.contains(c)) {
                comp.reverse();
            }
            order.extend(comp);
        }
        order
    }

    fn build(&self) -> Result<Built> {
        let mut live: Vec<usize> = (0..self.arcs.len()).filter(|&a| self.arcs[a].is_some()).collect();
        live.sort_by_key(|&a| self.arc(a).key);
        if live.len() != 2 * self.n {
            return Err(Error::Invalid(format!("{} arcs for {} crossings", live.len(), self.n)));
        }
        let mut order = live.clone();
        for attempt in 0.. {
            let (crossings, emb) = self.embed(&order)?;
            let wrong: Vec<usize> = order
                .iter()
                .enumerate()
                .filter(|(l, &a)| emb.arc_ends[*l] != (self.arc(a).from, self.arc(a).to))
                .map(|(_, &a)| a)
                .collect();
            if wrong.is_empty() {
                return self.finish(&order, crossings, &emb);
            }
            order = match attempt {
                0 => self.walk_order(&live, &[]),
                1 => self.walk_order(&live, &wrong),
                _ => return Err(Error::Unsupported("orientation of the new diagram cannot be encoded".into())),
            };
        }
        unreachable!()
    }

    fn finish(&self, order: &[usize], crossings: Vec<[u32; 4]>, emb: &Embedding) -> Result<Built> {
        let mut arc_final = vec![None; self.arcs.len()];
        for (l, &a) in order.iter().enumerate() {
            arc_final[a] = Some(l);
        }
        let mut sources: Vec<Vec<usize>> = order.iter().map(|&a| self.arc(a).sources.clone()).collect();
        let mut unknot_final = vec![None; self.unknots.len()];
        let mut records = Vec::new();
        for (k, u) in self.unknots.iter().enumerate() {
            let Some(u) = u else { continue };
            let face = match (self.n, u.container) {
                (0, _) | (_, Container::Outer) => None,
                (_, Container::Left(a)) => arc_final[a].map(|l| emb.left_face(l)),
                (_, Container::Right(a)) => arc_final[a].map(|l| emb.right_face(l)),
            };
            unknot_final[k] = Some(order.len() + records.len());
            records.push(UnknotRecord { rotation: u.rotation, face });
            sources.push(u.sources.clone());
        }
        let pd = PdCode::new(crossings, records, None)?;
        Ok(Built { pd, sources, arc_final, unknot_final })
    }
}

// ---------------------------------------------------------------------------
// Reidemeister sites

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MoveKind {
    R1,
    R1Remove,
    R2,
    R2Remove,
    R3,
}

/// A Reidemeister move between a diagram with more crossings (`big`) and one
/// with fewer (`small`); for R3 both have the same size and `big` is the one
/// before the move.
#[derive(Clone, Debug)]
pub struct MoveSite {
    pub kind: MoveKind,
    pub big: PdCode,
    pub small: PdCode,
    /// Segment of the small diagram continuing each big segment; `None` inside the site.
    pub seg_big: Vec<Option<usize>>,
    pub interior_small: Vec<bool>,
    /// Small crossing equal to each big crossing; `None` at the site.
    pub cross_big: Vec<Option<usize>>,
    pub site_small: Vec<usize>,
    /// Crossings whose edges may be used for elimination.
    pub allowed_big: Vec<usize>,
    pub allowed_small: Vec<usize>,
    /// Match resolutions of the site by how they connect its boundary points.
    pub matching: bool,
    /// Whether `big` is the diagram after the move.
    pub big_after: bool,
}

fn segment_index(d: &Diagram, label: usize) -> Result<usize> {
    if label == 0 || label > d.n_segments() {
        return Err(Error::Invalid(format!("segment {label} does not exist")));
    }
    Ok(label - 1)
}

fn seg_of(d: &Diagram, s: usize) -> Seg {
    if s < d.arcs.len() {
        Seg::Arc(s)
    } else {
        Seg::Unknot(s - d.arcs.len())
    }
}

fn check_face(d: &Diagram, f: usize) -> Result<()> {
    if f >= d.n_base_regions() {
        return Err(Error::Invalid(format!("face {f} does not exist")));
    }
    Ok(())
}

fn addition(kind: MoveKind, d: &Diagram, w: &Wiring) -> Result<MoveSite> {
    let built = w.build()?;
    let n_small = d.n_crossings();
    let nb = built.pd.crossings.len();
    Ok(MoveSite {
        kind,
        seg_big: built.sources.iter().map(|s| s.first().copied()).collect(),
        big: built.pd,
        small: d.pd.clone(),
        interior_small: vec![false; d.n_segments()],
        cross_big: (0..nb).map(|c| (c < n_small).then_some(c)).collect(),
        site_small: Vec::new(),
        allowed_big: (n_small..nb).collect(),
        allowed_small: Vec::new(),
        matching: false,
        big_after: true,
    })
}

fn removal(kind: MoveKind, d: &Diagram, w: &Wiring, removed: &[usize]) -> Result<MoveSite> {
    let built = w.build()?;
    let seg_big = built.old_to_new(d.n_segments());
    let mut next = 0;
    let cross_big = (0..d.n_crossings())
        .map(|c| {
            if removed.contains(&c) {
                None
            } else {
                next += 1;
                Some(next - 1)
            }
        })
        .collect();
    let mut allowed: Vec<usize> = removed.to_vec();
    allowed.sort_unstable();
    Ok(MoveSite {
        kind,
        big: d.pd.clone(),
        interior_small: vec![false; built.sources.len()],
        small: built.pd,
        seg_big,
        cross_big,
        site_small: Vec::new(),
        allowed_big: allowed,
        allowed_small: Vec::new(),
        matching: false,
        big_after: false,
    })
}

/// Ports of the new kink for a strand entering it: the first pass, then the loop's return pass.
fn kink_passes(k: usize, sign: i8, left: bool) -> [(usize, u8, u8); 2] {
    match ((sign > 0) == left, sign > 0) {
        (true, true) => [(k, 0, 2), (k, 3, 1)],
        (true, false) => [(k, 0, 2), (k, 1, 3)],
        (false, true) => [(k, 3, 1), (k, 0, 2)],
        (false, false) => [(k, 1, 3), (k, 0, 2)],
    }
}

/// Adds a kink of the given sign on a segment, with the loop on its left or right.
pub fn r1_site(pd: &PdCode, segment: usize, sign: i8, left: bool) -> Result<MoveSite> {
    let d = build_diagram(pd, None)?;
    let s = segment_index(&d, segment)?;
    let mut w = Wiring::from_diagram(&d);
    let k = w.n;
    w.n += 1;
    w.thread(seg_of(&d, s), &kink_passes(k, sign, left), &[true]);
    addition(MoveKind::R1, &d, &w)
}

fn common_face(d: &Diagram, a: usize, b: usize, face: Option<usize>) -> Result<usize> {
    let (fa, fb) = (d.segment_faces(a), d.segment_faces(b));
    let found = match face {
        Some(f) => (fa.contains(&f) && fb.contains(&f)).then_some(f),
        None => fa.iter().copied().find(|f| fb.contains(f)),
    };
    found.ok_or_else(|| Error::Invalid(format!("segments {} and {} do not share a face", a + 1, b + 1)))
}

/// Pushes segment `over` across segment `under` through a face they share.
pub fn r2_site(pd: &PdCode, over: usize, under: usize, face: Option<usize>) -> Result<MoveSite> {
    let d = build_diagram(pd, None)?;
    let (a, b) = (segment_index(&d, over)?, segment_index(&d, under)?);
    let f = common_face(&d, a, b, face)?;
    let sa = d.segment_faces(a)[0] == f;
    let sb = d.segment_faces(b)[0] == f;
    let fs = if sb { 3 } else { 1 };
    let os = (fs + 2) % 4;
    let mut w = Wiring::from_diagram(&d);
    let (c1, c2) = (w.n, w.n + 1);
    w.n += 2;
    let (bf, bs) = if sa != sb { (c1, c2) } else { (c2, c1) };
    let over_passes = [(c1, fs, os), (c2, os, fs)];
    let under_passes = [(bf, 0, 2), (bs, 0, 2)];
    if a == b {
        if a < d.arcs.len() {
            return Err(Error::Unsupported("R2 of an arc with itself".into()));
        }
        let passes = [over_passes[0], over_passes[1], under_passes[0], under_passes[1]];
        w.thread(seg_of(&d, a), &passes, &[true, false, true]);
    } else {
        w.thread(seg_of(&d, a), &over_passes, &[true]);
        w.thread(seg_of(&d, b), &under_passes, &[true]);
    }
    addition(MoveKind::R2, &d, &w)
}

/// Role of the strand along a triangle side: over at both ends, under at both, or mixed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Side {
    Top,
    Middle,
    Bottom,
}

/// Slides a strand across the opposite crossing of a triangular face.
pub fn r3_site(pd: &PdCode, face: usize) -> Result<MoveSite> {
    let d = build_diagram(pd, None)?;
    if d.n_crossings() == 0 {
        return Err(Error::Invalid("no triangle in a crossingless diagram".into()));
    }
    check_face(&d, face)?;
    let boundary = &d.regions[face].boundary;
    let sides: Vec<usize> = boundary.iter().map(|x| x.seg).collect();
    let mut corners: Vec<usize> = sides.iter().flat_map(|&m| [d.arcs[m].from.0, d.arcs[m].to.0]).collect();
    corners.sort_unstable();
    corners.dedup();
    if sides.len() != 3 || corners.len() != 3 {
        return Err(Error::Invalid(format!("face {face} is not a triangle")));
    }
    let mut roles = Vec::new();
    for &m in &sides {
        let (x, y) = (d.arcs[m].from, d.arcs[m].to);
        roles.push(match (x.1 % 2 == 1, y.1 % 2 == 1) {
            (true, true) => Side::Top,
            (false, false) => Side::Bottom,
            _ => Side::Middle,
        });
    }
    let pos = |r: Side| roles.iter().position(|&x| x == r);
    let (Some(t), Some(m), Some(b)) = (pos(Side::Top), pos(Side::Middle), pos(Side::Bottom)) else {
        return Err(Error::Invalid(format!("face {face} is not an R3 triangle (strand heights {roles:?})")));
    };
    let ends = |i: usize| [d.arcs[sides[i]].from.0, d.arcs[sides[i]].to.0];
    let shared = |i: usize, j: usize| ends(i).into_iter().find(|c| ends(j).contains(c)).unwrap();
    let (tm, tb) = (shared(t, m), shared(t, b));

    let mut w = Wiring::from_diagram(&d);
    let mut edits = Vec::new();
    for &s in &sides {
        let (x, y) = (d.arcs[s].from, d.arcs[s].to);
        let i = d.arc_at(x.0, (x.1 + 2) % 4);
        let o = d.arc_at(y.0, (y.1 + 2) % 4);
        if sides.contains(&i) || sides.contains(&o) {
            return Err(Error::Invalid(format!("face {face} is not an R3 triangle")));
        }
        edits.push((i, s, o, x, y));
    }
    for (i, s, o, x, y) in edits {
        w.arc_mut(i).to = y;
        let side = w.arc_mut(s);
        side.from = opposite(y);
        side.to = opposite(x);
        side.sources.clear();
        w.arc_mut(o).from = x;
    }
    let built = w.build()?;
    let seg_big = built.old_to_new(d.n_segments());
    let interior_small = built.sources.iter().map(|s| s.is_empty()).collect();
    Ok(MoveSite {
        kind: MoveKind::R3,
        big: d.pd.clone(),
        small: built.pd,
        seg_big,
        interior_small,
        cross_big: (0..d.n_crossings()).map(|c| (!corners.contains(&c)).then_some(c)).collect(),
        site_small: corners,
        allowed_big: vec![tm.min(tb), tm.max(tb)],
        allowed_small: vec![tm.min(tb), tm.max(tb)],
        matching: true,
        big_after: false,
    })
}

/// Removes the kink at a crossing.
pub fn r1_removal_site(pd: &PdCode, crossing: usize) -> Result<MoveSite> {
    let d = build_diagram(pd, None)?;
    if crossing >= d.n_crossings() {
        return Err(Error::Invalid(format!("crossing {crossing} does not exist")));
    }
    let k = crossing;
    let lp = d.arcs.iter().position(|a| a.from.0 == k && a.to.0 == k && (a.to.1 + 4 - a.from.1) % 2 == 1);
    let Some(l) = lp else {
        return Err(Error::Invalid(format!("crossing {k} is not a kink")));
    };
    let (lf, lt) = (d.arcs[l].from, d.arcs[l].to);
    let mut w = Wiring::from_diagram(&d);
    w.splice(&[k], &[l], &[(opposite(lf), opposite(lt))], |a| {
        if d.arcs[a].flow > 0 {
            Rotation::Cw
        } else {
            Rotation::Ccw
        }
    });
    removal(MoveKind::R1Remove, &d, &w, &[k])
}

/// Removes the bigon bounded by a face.
pub fn r2_removal_site(pd: &PdCode, face: usize) -> Result<MoveSite> {
    let d = build_diagram(pd, None)?;
    if d.n_crossings() == 0 {
        return Err(Error::Invalid("no bigon in a crossingless diagram".into()));
    }
    check_face(&d, face)?;
    let sides: Vec<usize> = d.regions[face].boundary.iter().map(|x| x.seg).collect();
    let bad = || Error::Invalid(format!("face {face} is not an R2 bigon"));
    if sides.len() != 2 || sides[0] == sides[1] {
        return Err(bad());
    }
    let parity = |s: usize| (d.arcs[s].from.1 % 2, d.arcs[s].to.1 % 2);
    let (o, u) = match (parity(sides[0]), parity(sides[1])) {
        ((1, 1), (0, 0)) => (sides[0], sides[1]),
        ((0, 0), (1, 1)) => (sides[1], sides[0]),
        _ => return Err(bad()),
    };
    let mut crossings = vec![d.arcs[o].from.0, d.arcs[o].to.0];
    crossings.sort_unstable();
    let mut cu = vec![d.arcs[u].from.0, d.arcs[u].to.0];
    cu.sort_unstable();
    if crossings[0] == crossings[1] || crossings != cu {
        return Err(bad());
    }
    let links = [o, u].map(|s| (opposite(d.arcs[s].from), opposite(d.arcs[s].to)));
    let mut w = Wiring::from_diagram(&d);
    w.splice(&crossings, &[o, u], &links, |a| {
        if d.arcs[a].flow > 0 {
            Rotation::Cw
        } else {
            Rotation::Ccw
        }
    });
    removal(MoveKind::R2Remove, &d, &w, &crossings)
}

// ---------------------------------------------------------------------------
// Retractions

/// Gaussian elimination along site crossings, cancelling generators that
/// differ by a small circle lying entirely inside the site.
fn site_reduce(cc: &CubeComplex, interior: &[bool], allowed: &[usize]) -> Result<Reduced> {
    let mut pairs = Vec::new();
    for &i in allowed {
        for u in 0..cc.cube.n_vertices() as Vertex {
            if u >> i & 1 == 1 {
                continue;
            }
            let v = u | 1 << i;
            let (src, dst) = (cc.cube.resolution(u), cc.cube.resolution(v));
            let local = |r: &crate::cube::Resolution, c: usize| r.circles[c].darts.iter().all(|x| interior[x.seg]);
            let kind = cc.edge(u, i).desc.kind;
            let carry = carry_circles(&src, &dst);
            let (ks, kd) = (src.n_circles(), dst.n_circles());
            let k = popcount(u);
            let mut push = |idx: usize, t: u64| {
                pairs.push((k, cc.offsets[u as usize] + idx, cc.offsets[v as usize] + labels_to_index(t, kd)))
            };
            match kind {
                SurgeryKind::Split { c1, c2, .. } if local(&dst, c1) != local(&dst, c2) => {
                    let o = if local(&dst, c1) { c1 } else { c2 };
                    for idx in 0..1usize << ks {
                        let labels = index_to_labels(idx, ks);
                        let t = frobenius_image(labels, &carry, &kind).into_iter().find(|t| t >> o & 1 == 1);
                        push(idx, t.expect("split term with X on the new circle"));
                    }
                }
                SurgeryKind::Merge { a, b, .. } if local(&src, a) != local(&src, b) => {
                    let o = if local(&src, a) { a } else { b };
                    for idx in 0..1usize << ks {
                        let labels = index_to_labels(idx, ks);
                        if labels >> o & 1 == 0 {
                            push(idx, frobenius_image(labels, &carry, &kind)[0]);
                        }
                    }
                }
                _ => {}
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    let mut e = Elimination::new(&cc.complex, true);
    let mut done = vec![false; pairs.len()];
    loop {
        let mut progress = false;
        for (p, &(k, x, y)) in pairs.iter().enumerate() {
            if done[p] || !e.alive[k][x] || !e.alive[k + 1][y] || e.coefficient(k, x, y).abs() != 1 {
                continue;
            }
            e.eliminate(k, x, y)?;
            done[p] = true;
            progress = true;
        }
        if !progress {
            break;
        }
    }
    Ok(e.finish(cc.complex.meta.clone()))
}

type Point = (usize, bool);

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct GenKey {
    bits: Vec<u8>,
    matching: Vec<(Point, Point)>,
    circles: Vec<(Vec<usize>, bool)>,
    h: i64,
    q: i64,
}

/// One side of a move, with segments and crossings named as in the small diagram.
struct SideView<'a> {
    cc: &'a CubeComplex,
    canon: Vec<Option<usize>>,
    cross: Vec<Option<usize>>,
    site: Vec<usize>,
    n_common: usize,
    matching: bool,
}

impl SideView<'_> {
    /// Pairs of boundary points of the site joined by the resolution at `u`.
    fn boundary_matching(&self, u: Vertex) -> Vec<(Point, Point)> {
        let d = self.cc.diagram();
        let point = |a: usize, port: Port| self.canon[a].map(|id| (id, d.arcs[a].to == port));
        let mut pairs = BTreeSet::new();
        for &c in &self.site {
            for p in 0..4u8 {
                let Some(start) = point(d.arc_at(c, p), (c, p)) else { continue };
                let (mut c1, mut p1) = (c, p);
                let end = loop {
                    let q = partner(u >> c1 & 1 == 1, p1);
                    let b = d.arc_at(c1, q);
                    if let Some(e) = point(b, (c1, q)) {
                        break e;
                    }
                    let arc = &d.arcs[b];
                    (c1, p1) = if arc.from == (c1, q) { arc.to } else { arc.from };
                };
                pairs.insert((start.min(end), start.max(end)));
            }
        }
        pairs.into_iter().collect()
    }

    fn key(&self, g: &Generator) -> GenKey {
        let r = self.cc.cube.resolution(g.vertex);
        let mut bits = vec![2u8; self.n_common];
        for (c, t) in self.cross.iter().enumerate() {
            if let Some(t) = t {
                bits[*t] = (g.vertex >> c & 1) as u8;
            }
        }
        let mut circles: Vec<(Vec<usize>, bool)> = r
            .circles
            .iter()
            .enumerate()
            .filter_map(|(j, c)| {
                let ids: BTreeSet<usize> = c.darts.iter().filter_map(|x| self.canon[x.seg]).collect();
                (!ids.is_empty()).then(|| (ids.into_iter().collect(), g.labels >> j & 1 == 1))
            })
            .collect();
        circles.sort();
        let matching = if self.matching { self.boundary_matching(g.vertex) } else { Vec::new() };
        GenKey { bits, matching, circles, h: g.h, q: g.q }
    }
}

/// Chain maps between the two sides of a Reidemeister move.
#[derive(Clone, Debug)]
pub struct Retraction {
    /// From the big diagram to the small one.
    pub retraction: ChainMap,
    /// From the small diagram to the big one.
    pub inclusion: ChainMap,
    pub eliminated: usize,
}

fn tracked(source: &ChainComplex, target: &ChainComplex, maps: &[SparseMat]) -> ChainMap {
    ChainMap { source: source.clone(), target: target.clone(), maps: maps.to_vec(), q_shift: 0, h_shift: 0 }
}

pub fn reidemeister_retract(site: &MoveSite, rule: SignRule) -> Result<Retraction> {
    let big = CubeComplex::build(build_diagram(&site.big, None)?, rule)?;
    let small = CubeComplex::build(build_diagram(&site.small, None)?, rule)?;
    retract_with(site, &big, &small)
}

fn retract_with(site: &MoveSite, big: &CubeComplex, small: &CubeComplex) -> Result<Retraction> {
    let interior_big: Vec<bool> = site.seg_big.iter().map(|s| s.is_none()).collect();
    let big_red = site_reduce(big, &interior_big, &site.allowed_big)?;
    let small_red = site_reduce(small, &site.interior_small, &site.allowed_small)?;
    let ns = site.small.crossings.len();
    let big_view = SideView {
        cc: big,
        canon: site.seg_big.clone(),
        cross: site.cross_big.clone(),
        site: (0..site.cross_big.len()).filter(|&c| site.cross_big[c].is_none()).collect(),
        n_common: ns,
        matching: site.matching,
    };
    let small_view = SideView {
        cc: small,
        canon: site.interior_small.iter().enumerate().map(|(s, &i)| (!i).then_some(s)).collect(),
        cross: (0..ns).map(|c| (!site.site_small.contains(&c)).then_some(c)).collect(),
        site: site.site_small.clone(),
        n_common: ns,
        matching: site.matching,
    };
    let (bc, sc) = (&big_red.complex, &small_red.complex);
    if bc.rank() != sc.rank() {
        return Err(Error::Verification(format!(
            "site reduction leaves {} generators against {}",
            bc.rank(),
            sc.rank()
        )));
    }
    let mut index: HashMap<GenKey, usize> = HashMap::new();
    for g in sc.groups.iter() {
        for (p, x) in g.iter().enumerate() {
            if index.insert(small_view.key(x), p).is_some() {
                return Err(Error::Verification("survivors of the small diagram are not distinguished".into()));
            }
        }
    }
    let mut hit = HashSet::new();
    let mut sigma: Vec<Vec<usize>> = Vec::new();
    for g in &bc.groups {
        let mut row = Vec::new();
        for x in g {
            let p = *index
                .get(&big_view.key(x))
                .ok_or_else(|| Error::Verification(format!("survivor at h={} q={} has no partner", x.h, x.q)))?;
            if !hit.insert((x.h, p)) {
                return Err(Error::Verification("two survivors share a partner".into()));
            }
            row.push(p);
        }
        sigma.push(row);
    }
    let mut trip: Vec<Vec<(usize, usize, i64)>> = vec![Vec::new(); sc.d.len()];
    for (k, m) in bc.d.iter().enumerate() {
        for (r, c, v) in m.triplets() {
            let ks = (bc.h_min + k as i64 - sc.h_min) as usize;
            trip[ks].push((sigma[k + 1][r], sigma[k][c], v));
        }
    }
    let d = trip
        .into_iter()
        .enumerate()
        .map(|(k, t)| SparseMat::from_triplets(sc.groups[k + 1].len(), sc.groups[k].len(), t))
        .collect();
    let permuted = ChainComplex { h_min: sc.h_min, groups: sc.groups.clone(), d, meta: sc.meta.clone() };
    let phi = solve_diagonal_phi(&permuted, sc).map_err(|e| Error::Verification(format!("no sign correction: {e}")))?;

    let s_maps: Vec<SparseMat> = bc
        .groups
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let h = bc.h_min + k as i64;
            let t: Vec<(usize, usize, i64)> = (0..g.len())
                .map(|p| {
                    let sp = sigma[k][p];
                    (sp, p, phi.signs[(h - sc.h_min) as usize][sp] as i64)
                })
                .collect();
            SparseMat::from_triplets(sc.group(h).len(), g.len(), t)
        })
        .collect();
    let s_inv: Vec<SparseMat> = sc
        .groups
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let h = sc.h_min + k as i64;
            let kb = h - bc.h_min;
            if kb >= 0 && (kb as usize) < s_maps.len() {
                s_maps[kb as usize].transpose()
            } else {
                SparseMat::zeros(bc.group(h).len(), g.len())
            }
        })
        .collect();
    let s = tracked(bc, sc, &s_maps);
    let s_back = tracked(sc, bc, &s_inv);
    let retraction = tracked(&big.complex, bc, &big_red.retract)
        .then(&s)
        .then(&tracked(sc, &small.complex, &small_red.include));
    let inclusion = tracked(&small.complex, sc, &small_red.retract)
        .then(&s_back)
        .then(&tracked(bc, &big.complex, &big_red.include));
    if !retraction.is_chain_map() || !inclusion.is_chain_map() {
        return Err(Error::Verification("Reidemeister maps do not commute with the differentials".into()));
    }
    let eliminated = (big.complex.rank() - bc.rank()) / 2 + (small.complex.rank() - sc.rank()) / 2;
    Ok(Retraction { retraction, inclusion, eliminated })
}

// ---------------------------------------------------------------------------
// Morse moves

/// A local cobordism between diagrams with the same crossings. Segments `x, y`
/// and a dying `seg` live in the source diagram, `tx, ty` in the target.
#[derive(Clone, Copy, Debug)]
enum Morse {
    Birth,
    Death { seg: usize, eps: i8 },
    Saddle { x: usize, y: usize, tx: usize, ty: usize, sign: i8 },
}

/// Per-vertex signs making the local map commute with both edge sign assignments.
fn vertex_gauge(src: &CubeComplex, dst: &CubeComplex) -> Vec<i8> {
    let nv = src.cube.n_vertices();
    let mut g = vec![1i8; nv];
    for u in 1..nv as Vertex {
        let i = u.trailing_zeros() as usize;
        let w = u & !(1 << i);
        g[u as usize] = g[w as usize] * src.edge(w, i).sign * dst.edge(w, i).sign;
    }
    g
}

fn morse_map(src: &CubeComplex, dst: &CubeComplex, seg_map: &[Option<usize>], m: Morse, q_shift: i64) -> Result<ChainMap> {
    let n = src.cube.n();
    if dst.cube.n() != n || src.complex.h_min != dst.complex.h_min {
        return Err(Error::Invalid("cobordism between diagrams with different crossings".into()));
    }
    let gauge = vertex_gauge(src, dst);
    let per_vertex: Vec<Result<Vec<(usize, usize, i64)>>> = (0..src.cube.n_vertices() as Vertex)
        .into_par_iter()
        .map(|u| {
            let (rs, rd) = (src.cube.resolution(u), dst.cube.resolution(u));
            let carry: Vec<usize> = rs
                .circles
                .iter()
                .map(|c| {
                    c.darts.iter().find_map(|x| seg_map[x.seg]).map_or(usize::MAX, |t| rd.seg_circle[t])
                })
                .collect();
            let (ks, kd) = (rs.n_circles(), rd.n_circles());
            let (ro, co) = (dst.offsets[u as usize], src.offsets[u as usize]);
            let g = gauge[u as usize] as i64;
            let moved = |labels: u64, skip: &[usize]| -> Result<u64> {
                let mut t = 0u64;
                for (j, &c) in carry.iter().enumerate() {
                    if skip.contains(&j) {
                        continue;
                    }
                    if c == usize::MAX {
                        return Err(Error::Invalid("a circle is lost by the cobordism".into()));
                    }
                    if labels >> j & 1 == 1 {
                        t |= 1 << c;
                    }
                }
                Ok(t)
            };
            let mut out = Vec::new();
            for idx in 0..1usize << ks {
                let labels = index_to_labels(idx, ks);
                match m {
                    Morse::Birth => {
                        out.push((ro + labels_to_index(moved(labels, &[])?, kd), co + idx, g));
                    }
                    Morse::Death { seg, eps } => {
                        let dead = rs.seg_circle[seg];
                        if labels >> dead & 1 == 1 {
                            let t = moved(labels, &[dead])?;
                            out.push((ro + labels_to_index(t, kd), co + idx, eps as i64 * g));
                        }
                    }
                    Morse::Saddle { x, y, tx, ty, sign } => {
                        let (a, b) = (rs.seg_circle[x], rs.seg_circle[y]);
                        let (ta, tb) = (rd.seg_circle[tx], rd.seg_circle[ty]);
                        let kind = if a != b {
                            if ta != tb {
                                return Err(Error::Invalid("saddle does not merge".into()));
                            }
                            SurgeryKind::Merge { a: a.min(b), b: a.max(b), into: ta }
                        } else {
                            if ta == tb {
                                return Err(Error::Invalid("saddle does not split".into()));
                            }
                            SurgeryKind::Split { from: a, c1: ta.min(tb), c2: ta.max(tb) }
                        };
                        moved(labels, &[a, b])?;
                        let mut full = carry.clone();
                        for j in [a, b] {
                            full[j] = 0;
                        }
                        for t in frobenius_image(labels, &full, &kind) {
                            out.push((ro + labels_to_index(t, kd), co + idx, sign as i64 * g));
                        }
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let mut trip: Vec<Vec<(usize, usize, i64)>> = vec![Vec::new(); n + 1];
    for (u, t) in per_vertex.into_iter().enumerate() {
        trip[popcount(u as Vertex)].extend(t?);
    }
    let maps = trip
        .into_iter()
        .enumerate()
        .map(|(k, t)| SparseMat::from_triplets(dst.complex.groups[k].len(), src.complex.groups[k].len(), t))
        .collect();
    let f = ChainMap { source: src.complex.clone(), target: dst.complex.clone(), maps, q_shift, h_shift: 0 };
    if !f.is_chain_map() {
        return Err(Error::Verification("cobordism map does not commute with the differentials".into()));
    }
    Ok(f)
}

/// Cup: a new circle labelled One.
pub fn birth_map(src: &CubeComplex, face: Option<usize>, rotation: Rotation) -> Result<(PdCode, ChainMap)> {
    let d = src.diagram();
    let mut w = Wiring::from_diagram(d);
    let container = match face {
        None => Container::Outer,
        Some(f) => {
            check_face(d, f)?;
            face_container(d, f)
        }
    };
    let k = w.push_unknot(rotation, container);
    let built = w.build()?;
    let dst = CubeComplex::build(build_diagram(&built.pd, None)?, src.rule)?;
    built.segment(Seg::Unknot(k));
    let map = morse_map(src, &dst, &built.old_to_new(d.n_segments()), Morse::Birth, 1)?;
    Ok((built.pd, map))
}

/// Cap on a crossingless component: One goes to zero, X to its flow value.
pub fn death_map(src: &CubeComplex, component: usize) -> Result<(PdCode, ChainMap)> {
    let d = src.diagram();
    let strands = strand_components(&d.pd.crossings);
    if component < strands {
        return Err(Error::Invalid(format!("component {component} has crossings and cannot be capped")));
    }
    let j = component - strands;
    if j >= d.unknots.len() {
        return Err(Error::Invalid(format!("component {component} does not exist")));
    }
    let seg = d.arcs.len() + j;
    let eps = d.segment_flow(seg);
    let mut w = Wiring::from_diagram(d);
    w.unknots[j] = None;
    let built = w.build()?;
    let dst = CubeComplex::build(build_diagram(&built.pd, None)?, src.rule)?;
    let map = morse_map(src, &dst, &built.old_to_new(d.n_segments()), Morse::Death { seg, eps }, 1)?;
    Ok((built.pd, map))
}

/// Oriented saddle between two segments (1-based labels) across a face they share.
pub fn saddle_map(src: &CubeComplex, segments: [usize; 2], face: Option<usize>) -> Result<(PdCode, ChainMap)> {
    let d = src.diagram();
    let (x, y) = (segment_index(d, segments[0])?, segment_index(d, segments[1])?);
    let mut w = Wiring::from_diagram(d);
    let incompatible = || Error::Invalid(format!("segments {} and {} admit no oriented saddle", x + 1, y + 1));
    let want = |f: usize| face.is_none_or(|g| g == f);
    let (tx, ty) = match (seg_of(d, x), seg_of(d, y)) {
        (Seg::Arc(a), Seg::Arc(b)) if a != b => {
            let (fa, fb) = (d.arc_faces[a], d.arc_faces[b]);
            if !(0..2).any(|s| fa[s] == fb[s] && want(fa[s])) {
                return Err(incompatible());
            }
            let (ta, tb) = (w.arc(a).to, w.arc(b).to);
            w.arc_mut(a).to = tb;
            w.arc_mut(b).to = ta;
            (Seg::Arc(a), Seg::Arc(b))
        }
        (Seg::Arc(a), Seg::Arc(_)) => {
            let fa = d.arc_faces[a];
            let (container, rotation) = if want(fa[0]) {
                (Container::Left(a), Rotation::Cw)
            } else if want(fa[1]) {
                (Container::Right(a), Rotation::Ccw)
            } else {
                return Err(incompatible());
            };
            let k = w.push_unknot(rotation, container);
            (Seg::Arc(a), Seg::Unknot(k))
        }
        (Seg::Arc(a), Seg::Unknot(k)) | (Seg::Unknot(k), Seg::Arc(a)) => {
            let u = &d.unknots[k];
            let side = if u.rotation == Rotation::Cw { 0 } else { 1 };
            if d.arc_faces[a][side] != u.container || !want(u.container) {
                return Err(incompatible());
            }
            w.unknots[k] = None;
            (Seg::Arc(a), Seg::Arc(a))
        }
        (Seg::Unknot(k1), Seg::Unknot(k2)) if k1 != k2 => {
            let (u1, u2) = (&d.unknots[k1], &d.unknots[k2]);
            if u1.container != u2.container || u1.rotation != u2.rotation || !want(u1.container) {
                return Err(incompatible());
            }
            w.unknots[k2] = None;
            (Seg::Unknot(k1), Seg::Unknot(k1))
        }
        (Seg::Unknot(k), Seg::Unknot(_)) => {
            let u = &d.unknots[k];
            if !want(u.container) {
                return Err(Error::Unsupported("splitting off a circle nested inside an unknot".into()));
            }
            let c = w.unknots[k].as_ref().unwrap().container;
            let k2 = w.push_unknot(u.rotation, c);
            (Seg::Unknot(k), Seg::Unknot(k2))
        }
    };
    let built = w.build()?;
    let dst = CubeComplex::build(build_diagram(&built.pd, None)?, src.rule)?;
    let r0 = src.cube.resolution(0);
    let sign = if r0.seg_circle[x] == r0.seg_circle[y] { d.segment_flow(x) } else { 1 };
    let m = Morse::Saddle { x, y, tx: built.segment(tx), ty: built.segment(ty), sign };
    let map = morse_map(src, &dst, &built.old_to_new(d.n_segments()), m, -1)?;
    Ok((built.pd, map))
}

// ---------------------------------------------------------------------------
// Movies

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "step", rename_all = "kebab-case")]
pub enum Step {
    Birth { face: Option<usize>, rotation: Rotation },
    Death { component: usize },
    Saddle { segments: [usize; 2], face: Option<usize> },
    R1 { segment: usize, sign: i8, left: bool },
    R1Remove { crossing: usize },
    R2 { over: usize, under: usize, face: Option<usize> },
    R2Remove { face: usize },
    R3 { face: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Movie {
    pub initial: PdCode,
    pub steps: Vec<Step>,
}

fn parse_num(v: &str) -> Result<usize> {
    v.parse().map_err(|_| Error::Parse(format!("expected a number, found {v:?}")))
}

fn parse_pair(v: &str) -> Result<[usize; 2]> {
    let parts: Vec<&str> = v.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::Parse(format!("expected two labels, found {v:?}")));
    }
    Ok([parse_num(parts[0])?, parse_num(parts[1])?])
}

impl Movie {
    /// One step per line (`birth face=3`, `saddle arcs=2,5`, `r1+ arc=3 side=right`,
    /// `r2 arcs=1,4`, `r3 site=2`, ...). A line holding a PD code sets the initial diagram.
    pub fn parse(text: &str) -> Result<Movie> {
        let mut initial = PdCode::default();
        let mut steps = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with("PD[") || line.starts_with('{') {
                if !steps.is_empty() {
                    return Err(Error::Parse(format!("line {}: diagram after the first step", no + 1)));
                }
                initial = parse_pd(line)?;
                continue;
            }
            let mut tokens = line.split_whitespace();
            let op = tokens.next().unwrap();
            let mut params = std::collections::BTreeMap::new();
            for t in tokens {
                let (k, v) = t
                    .split_once('=')
                    .ok_or_else(|| Error::Parse(format!("line {}: expected key=value, found {t:?}", no + 1)))?;
                params.insert(k, v);
            }
            let mut take = |k: &str| params.remove(k);
            fn need<'a>(v: Option<&'a str>, k: &str, op: &str, no: usize) -> Result<&'a str> {
                v.ok_or_else(|| Error::Parse(format!("line {}: {op} needs {k}=", no + 1)))
            }
            let step = match op {
                "birth" => Step::Birth {
                    face: take("face").map(parse_num).transpose()?,
                    rotation: match take("rot") {
                        None | Some("cw") => Rotation::Cw,
                        Some("ccw") => Rotation::Ccw,
                        Some(r) => return Err(Error::Parse(format!("line {}: unknown rotation {r:?}", no + 1))),
                    },
                },
                "death" => Step::Death { component: parse_num(need(take("comp"), "comp", op, no)?)? },
                "saddle" => Step::Saddle {
                    segments: parse_pair(need(take("arcs"), "arcs", op, no)?)?,
                    face: take("face").map(parse_num).transpose()?,
                },
                "r1+" | "r1-" => Step::R1 {
                    segment: parse_num(need(take("arc"), "arc", op, no)?)?,
                    sign: if op == "r1+" { 1 } else { -1 },
                    left: match take("side") {
                        None | Some("left") => true,
                        Some("right") => false,
                        Some(s) => return Err(Error::Parse(format!("line {}: unknown side {s:?}", no + 1))),
                    },
                },
                "r1-remove" => Step::R1Remove { crossing: parse_num(need(take("crossing"), "crossing", op, no)?)? },
                "r2" => {
                    let [over, under] = parse_pair(need(take("arcs"), "arcs", op, no)?)?;
                    Step::R2 { over, under, face: take("face").map(parse_num).transpose()? }
                }
                "r2-remove" => Step::R2Remove { face: parse_num(need(take("face"), "face", op, no)?)? },
                "r3" => Step::R3 { face: parse_num(need(take("site"), "site", op, no)?)? },
                _ => return Err(Error::Parse(format!("line {}: unknown step {op:?}", no + 1))),
            };
            if let Some(k) = params.keys().next() {
                return Err(Error::Parse(format!("line {}: unexpected parameter {k:?}", no + 1)));
            }
            steps.push(step);
        }
        Ok(Movie { initial, steps })
    }
}

/// Map of one step and the diagram it produces.
pub fn step_map(src: &CubeComplex, step: &Step) -> Result<(PdCode, ChainMap)> {
    let pd = &src.diagram().pd;
    let rule = src.rule;
    let reid = |site: MoveSite| -> Result<(PdCode, ChainMap)> {
        let other_pd = if site.big_after { site.big.clone() } else { site.small.clone() };
        let other = CubeComplex::build(build_diagram(&other_pd, None)?, rule)?;
        let r = if site.big_after { retract_with(&site, &other, src)? } else { retract_with(&site, src, &other)? };
        let map = if site.big_after { r.inclusion } else { r.retraction };
        Ok((other_pd, map))
    };
    match *step {
        Step::Birth { face, rotation } => birth_map(src, face, rotation),
        Step::Death { component } => death_map(src, component),
        Step::Saddle { segments, face } => saddle_map(src, segments, face),
        Step::R1 { segment, sign, left } => reid(r1_site(pd, segment, sign, left)?),
        Step::R1Remove { crossing } => reid(r1_removal_site(pd, crossing)?),
        Step::R2 { over, under, face } => reid(r2_site(pd, over, under, face)?),
        Step::R2Remove { face } => reid(r2_removal_site(pd, face)?),
        Step::R3 { face } => reid(r3_site(pd, face)?),
    }
}

pub struct MovieStep {
    pub step: Step,
    pub diagram: PdCode,
    pub map: ChainMap,
}

pub struct MovieResult {
    pub initial: PdCode,
    pub steps: Vec<MovieStep>,
    pub composite: ChainMap,
    pub induced: Vec<InducedMap>,
}

pub fn evaluate_movie(m: &Movie, rule: SignRule) -> Result<MovieResult> {
    let mut cur = CubeComplex::build(build_diagram(&m.initial, None)?, rule)?;
    let mut composite = ChainMap::identity(&cur.complex);
    let mut steps = Vec::new();
    for (i, step) in m.steps.iter().enumerate() {
        let (pd, map) = step_map(&cur, step).map_err(|e| match e {
            Error::Parse(s) => Error::Parse(format!("step {}: {s}", i + 1)),
            Error::Invalid(s) => Error::Invalid(format!("step {}: {s}", i + 1)),
            Error::Unsupported(s) => Error::Unsupported(format!("step {}: {s}", i + 1)),
            Error::Verification(s) => Error::Verification(format!("step {}: {s}", i + 1)),
        })?;
        composite = composite.then(&map);
        cur = CubeComplex::build(build_diagram(&pd, None)?, rule)?;
        steps.push(MovieStep { step: step.clone(), diagram: pd, map });
    }
    let hs = homology_basis(&composite.source)?;
    let ht = homology_basis(&composite.target)?;
    let induced = composite.induced(&hs, &ht);
    Ok(MovieResult { initial: m.initial.clone(), steps, composite, induced })
}

/// Matrices of a chain map, one block per source degree.
pub fn chain_map_json(f: &ChainMap) -> Value {
    let blocks: Vec<Value> = f
        .maps
        .iter()
        .enumerate()
        .map(|(k, m)| {
            json!({
                "h": f.source.h_min + k as i64,
                "rows": m.nrows,
                "cols": m.ncols,
                "entries": m.triplets().iter().map(|&(r, c, v)| json!([r, c, v])).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({"q_shift": f.q_shift, "h_shift": f.h_shift, "matrices": blocks})
}

impl MovieResult {
    pub fn to_json(&self) -> Value {
        let steps: Vec<Value> = self
            .steps
            .iter()
            .map(|s| json!({"step": s.step, "diagram": s.diagram.to_text(), "map": chain_map_json(&s.map)}))
            .collect();
        json!({
            "initial": self.initial.to_text(),
            "steps": steps,
            "composite": chain_map_json(&self.composite),
            "composite_zero": self.composite.is_zero(),
            "composite_identity_sign": self.composite.identity_sign(),
            "induced": self.induced,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::homology::homology;

    fn cc(code: &str) -> CubeComplex {
        CubeComplex::build(build_diagram(&parse_pd(code).unwrap(), None).unwrap(), SignRule::Anchored).unwrap()
    }

    fn assert_iso(f: &ChainMap) {
        assert!(f.is_chain_map());
        let hs = homology_basis(&f.source).unwrap();
        let ht = homology_basis(&f.target).unwrap();
        assert_eq!(homology(&f.source).unwrap(), homology(&f.target).unwrap());
        for m in f.induced(&hs, &ht) {
            assert!(m.is_isomorphism(), "not an isomorphism at ({}, {})", m.h, m.q);
        }
    }

    fn run(script: &str) -> MovieResult {
        evaluate_movie(&Movie::parse(script).unwrap(), SignRule::Anchored).unwrap()
    }

    #[test]
    fn birth_on_empty_link() {
        let (pd, f) = birth_map(&cc("PD[]"), None, Rotation::Cw).unwrap();
        assert_eq!(pd.to_text(), "PD[];O[cw]");
        assert_eq!(f.q_shift, 1);
        // 1 goes to the One generator (index 0) of the unknot
        assert_eq!(f.maps[0].triplets(), vec![(0, 0, 1)]);
    }

    #[test]
    fn birth_adds_a_one_circle() {
        let (_, f) = birth_map(&cc("PD[];O[ccw]"), None, Rotation::Cw).unwrap();
        // (One, X) -> (One One, X One) in lexicographic order
        assert_eq!(f.maps[0].triplets(), vec![(0, 0, 1), (2, 1, 1)]);
    }

    #[test]
    fn death_uses_the_flow() {
        for (code, eps) in [("PD[];O[cw]", 1), ("PD[];O[ccw]", -1)] {
            let src = cc(code);
            assert_eq!(src.diagram().segment_flow(0), eps);
            let (pd, f) = death_map(&src, 0).unwrap();
            assert_eq!(pd.to_text(), "PD[]");
            assert_eq!(f.maps[0].triplets(), vec![(0, 1, eps as i64)]);
        }
        assert!(death_map(&cc("PD[X[1,5,2,4],X[3,1,4,6],X[5,3,6,2]]"), 0).is_err());
    }

    #[test]
    fn death_on_trefoil_plus_unknot() {
        let src = cc("PD[X[1,5,2,4],X[3,1,4,6],X[5,3,6,2]];O[ccw]");
        let (pd, f) = death_map(&src, 1).unwrap();
        assert_eq!(pd.crossings.len(), 3);
        assert!(f.is_chain_map());
    }

    #[test]
    fn birth_then_death_is_zero() {
        let r = run("PD[]\nbirth\ndeath comp=0\n");
        assert!(r.composite.is_zero());
        assert!(r.induced.iter().all(|m| m.is_zero()));
    }

    #[test]
    fn birth_then_saddle_is_plus_minus_identity() {
        for init in ["PD[];O[cw]", "PD[];O[ccw]"] {
            let rot = if init.contains("ccw") { "ccw" } else { "cw" };
            let r = run(&format!("{init}\nbirth rot={rot}\nsaddle arcs=1,2\n"));
            assert!(r.composite.identity_sign().is_some());
        }
    }

    #[test]
    fn empty_movie_is_identity() {
        let r = run("PD[X[1,5,2,4],X[3,1,4,6],X[5,3,6,2]]");
        assert_eq!(r.composite.identity_sign(), Some(1));
    }

    #[test]
    fn saddles_commute_with_differentials() {
        for code in ["PD[X[1,3,2,4],X[3,1,4,2]]", "PD[X[1,5,2,4],X[3,1,4,6],X[5,3,6,2]]", "PD[X[4,2,5,1],X[8,6,1,5],X[6,3,7,4],X[2,7,3,8]]"] {
            let src = cc(code);
            let n = src.diagram().n_segments();
            let mut ok = 0;
            for a in 1..=n {
                for b in a..=n {
                    match saddle_map(&src, [a, b], None) {
                        Ok((_, f)) => {
                            assert!(f.is_chain_map());
                            assert_eq!(f.q_shift, -1);
                            ok += 1;
                        }
                        Err(e) => assert!(matches!(e, Error::Invalid(_)), "{e}"),
                    }
                }
            }
            assert!(ok > 0, "{code}");
        }
    }

    #[test]
    fn saddle_split_off_an_unknot() {
        let src = cc("PD[X[1,5,2,4],X[3,1,4,6],X[5,3,6,2]]");
        let (pd, f) = saddle_map(&src, [2, 2], None).unwrap();
        assert_eq!(pd.unknots.len(), 1);
        assert!(f.is_chain_map());
    }

    #[test]
    fn r1_sites_give_isomorphisms() {
        for e in corpus::corpus().into_iter().filter(|e| e.pd.crossings.len() <= 3) {
            let n = build_diagram(&e.pd, None).unwrap().n_segments();
            for s in 1..=n.min(3) {
                for sign in [1, -1] {
                    for left in [true, false] {
                        let site = r1_site(&e.pd, s, sign, left).unwrap();
                        let big = build_diagram(&site.big, None).unwrap();
                        assert_eq!(big.n_crossings(), e.pd.crossings.len() + 1);
                        let new = &big.crossings[big.n_crossings() - 1];
                        assert_eq!(new.sign, sign, "{} segment {s}", e.name);
                        let r = reidemeister_retract(&site, SignRule::Anchored).unwrap();
                        assert_iso(&r.retraction);
                        assert!(r.inclusion.is_chain_map());
                    }
                }
            }
        }
    }

    #[test]
    fn r1_on_the_unknot() {
        for sign in [1, -1] {
            let site = r1_site(&parse_pd("PD[];O[cw]").unwrap(), 1, sign, true).unwrap();
            assert_eq!(site.big.crossings.len(), 1);
            let r = reidemeister_retract(&site, SignRule::Anchored).unwrap();
            assert_eq!(r.eliminated, 2);
            assert_iso(&r.retraction);
        }
    }

    #[test]
    fn r2_on_the_unknot() {
        let site = r2_site(&parse_pd("PD[];O[cw]").unwrap(), 1, 1, None).unwrap();
        let big = build_diagram(&site.big, None).unwrap();
        assert_eq!((big.n_plus, big.n_minus), (1, 1));
        let r = reidemeister_retract(&site, SignRule::Anchored).unwrap();
        assert_iso(&r.retraction);
    }

    #[test]
    fn r2_sites_give_isomorphisms() {
        for code in ["PD[X[1,5,2,4],X[3,1,4,6],X[5,3,6,2]]", "PD[X[1,3,2,4],X[3,1,4,2]]", "PD[];O[cw];O[ccw]"] {
            let pd = parse_pd(code).unwrap();
            let n = build_diagram(&pd, None).unwrap().n_segments();
            let mut ok = 0;
            for a in 1..=n {
                for b in 1..=n {
                    let Ok(site) = r2_site(&pd, a, b, None) else { continue };
                    assert_iso(&reidemeister_retract(&site, SignRule::Anchored).unwrap().retraction);
                    ok += 1;
                }
            }
            assert!(ok > 0);
        }
    }

    #[test]
    fn r3_sites_give_isomorphisms() {
        let mut ok = 0;
        for e in corpus::links().into_iter().filter(|e| e.pd.crossings.len() <= 6) {
            let d = build_diagram(&e.pd, None).unwrap();
            for f in 0..d.n_base_regions() {
                let Ok(site) = r3_site(&e.pd, f) else { continue };
                assert_eq!(site.small.crossings.len(), site.big.crossings.len());
                assert_iso(&reidemeister_retract(&site, SignRule::Anchored).unwrap().retraction);
                ok += 1;
            }
        }
        assert!(ok >= 3);
    }

    #[test]
    fn removals_undo_additions() {
        let trefoil = parse_pd("PD[X[1,5,2,4],X[3,1,4,6],X[5,3,6,2]]").unwrap();
        let added = r1_site(&trefoil, 2, -1, false).unwrap().big;
        let site = r1_removal_site(&added, 3).unwrap();
        assert_eq!(site.small.crossings.len(), 3);
        assert_iso(&reidemeister_retract(&site, SignRule::Anchored).unwrap().retraction);
        assert!(r1_removal_site(&trefoil, 0).is_err());

        let added = r2_site(&trefoil, 1, 4, None).unwrap().big;
        let d = build_diagram(&added, None).unwrap();
        let bigons: Vec<usize> = (0..d.n_base_regions()).filter(|&f| r2_removal_site(&added, f).is_ok()).collect();
        assert!(!bigons.is_empty());
        for f in bigons {
            let site = r2_removal_site(&added, f).unwrap();
            assert_eq!(site.small.crossings.len(), 3);
            assert_iso(&reidemeister_retract(&site, SignRule::Anchored).unwrap().retraction);
        }
    }

    #[test]
    fn isolated_kink_removal_leaves_an_unknot() {
        for code in ["PD[X[1,1,2,2]]", "PD[X[1,2,2,1]]"] {
            let site = r1_removal_site(&parse_pd(code).unwrap(), 0).unwrap();
            assert_eq!(site.small.unknots.len(), 1);
            assert_iso(&reidemeister_retract(&site, SignRule::Anchored).unwrap().retraction);
        }
    }

    #[test]
    fn movie_script_parses() {
        let m = Movie::parse(
            "# comment\nPD[X[1,5,2,4],X[3,1,4,6],X[5,3,6,2]]\nbirth face=3 rot=ccw\ndeath comp=2\nsaddle arcs=2,5\nr1+ arc=3\nr1- arc=3 side=right\nr2 arcs=1,4\nr3 site=2\nr1-remove crossing=0\nr2-remove face=1\n",
        )
        .unwrap();
        assert_eq!(m.initial.crossings.len(), 3);
        assert_eq!(m.steps.len(), 9);
        assert_eq!(m.steps[0], Step::Birth { face: Some(3), rotation: Rotation::Ccw });
        assert_eq!(m.steps[4], Step::R1 { segment: 3, sign: -1, left: false });
        assert_eq!(m.steps[5], Step::R2 { over: 1, under: 4, face: None });
        assert!(Movie::parse("twist arc=1").is_err());
        assert!(Movie::parse("saddle arcs=1").is_err());
        assert!(Movie::parse("death").is_err());
        assert!(Movie::parse("r3 site=1 extra=2").is_err());
    }

    #[test]
    fn movie_errors_name_the_step() {
        let err = evaluate_movie(&Movie::parse("PD[]\nbirth\nr3 site=0").unwrap(), SignRule::Anchored).err().unwrap();
        assert!(err.to_string().contains("step 2"), "{err}");
    }

    #[test]
    fn movie_with_reidemeister_steps() {
        let r = run("PD[];O[cw]\nr1+ arc=1\nr1-remove crossing=0\nr2 arcs=1,1\n");
        assert_eq!(r.steps.len(), 3);
        assert_iso(&r.composite);
        let json = r.to_json().to_string();
        assert_eq!(json, run("PD[];O[cw]\nr1+ arc=1\nr1-remove crossing=0\nr2 arcs=1,1\n").to_json().to_string());
    }
}
