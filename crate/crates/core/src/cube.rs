//! Cube of resolutions: circles of every smoothing and the surgery at every edge.

use std::sync::{Arc, OnceLock};

use serde::Serialize;

use crate::diagram::{Dart, Diagram};
use crate::error::{Error, Result};

/// A cube vertex as a bitmask; bit i is the smoothing of crossing i.
pub type Vertex = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum State {
    Oriented,
    Web,
}

/// One visit of a circle to a crossing site, entering at `from` and leaving at `to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Pass {
    pub crossing: usize,
    pub from: u8,
    pub to: u8,
}

impl Pass {
    /// Whether the chord of this site lies on the left of the traversal.
    pub fn chord_on_left(&self) -> bool {
        self.to == (self.from + 1) % 4
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Circle {
    /// Darts in traversal order, starting at the smallest segment run forward.
    pub darts: Vec<Dart>,
    /// `passes[k]` is the site reached at the end of `darts[k]`.
    pub passes: Vec<Pass>,
}

impl Circle {
    pub fn min_segment(&self) -> usize {
        self.darts[0].seg
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Resolution {
    pub vertex: Vertex,
    pub circles: Vec<Circle>,
    pub seg_circle: Vec<usize>,
    pub states: Vec<State>,
}

impl Resolution {
    pub fn n_circles(&self) -> usize {
        self.circles.len()
    }

    /// Circle through the given port of a crossing.
    pub fn circle_at(&self, d: &Diagram, c: usize, p: u8) -> usize {
        self.seg_circle[d.arc_at(c, p)]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Direction {
    Zip,
    Unzip,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SurgeryKind {
    /// Source circles `a < b` fuse into target circle `into`.
    Merge { a: usize, b: usize, into: usize },
    /// Source circle `from` divides into target circles `c1 < c2`.
    Split { from: usize, c1: usize, c2: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SurgeryDescriptor {
    pub crossing: usize,
    pub direction: Direction,
    pub kind: SurgeryKind,
    pub site_flow: i8,
}

impl SurgeryDescriptor {
    pub fn is_split(&self) -> bool {
        matches!(self.kind, SurgeryKind::Split { .. })
    }
}

pub fn popcount(u: Vertex) -> usize {
    u.count_ones() as usize
}

/// Smoothing at a crossing for a given bit, ignoring the crossing sign.
pub fn state_of(sign: i8, bit: bool) -> State {
    match (sign > 0, bit) {
        (true, false) | (false, true) => State::Oriented,
        _ => State::Web,
    }
}

/// Port joined to `p` by the smoothing with the given bit.
pub fn partner(bit: bool, p: u8) -> u8 {
    if bit {
        3 - p
    } else {
        p ^ 1
    }
}

pub fn resolve(d: &Diagram, u: Vertex) -> Resolution {
    let nseg = d.n_segments();
    let narcs = d.arcs.len();
    let mut seg_circle = vec![usize::MAX; nseg];
    let mut circles = Vec::new();
    for s in 0..nseg {
        if seg_circle[s] != usize::MAX {
            continue;
        }
        let id = circles.len();
        let mut darts = Vec::new();
        let mut passes = Vec::new();
        if s >= narcs {
            seg_circle[s] = id;
            darts.push(Dart { seg: s, fwd: true });
        } else {
            let mut cur = Dart { seg: s, fwd: true };
            loop {
                seg_circle[cur.seg] = id;
                darts.push(cur);
                let arc = &d.arcs[cur.seg];
                let (c, p) = if cur.fwd { arc.to } else { arc.from };
                let q = partner(u >> c & 1 == 1, p);
                passes.push(Pass { crossing: c, from: p, to: q });
                let next = d.arc_at(c, q);
                let fwd = d.arcs[next].from == (c, q);
                cur = Dart { seg: next, fwd };
                if cur.seg == s {
                    break;
                }
            }
        }
        circles.push(Circle { darts, passes });
    }
    let states = d
        .crossings
        .iter()
        .map(|x| state_of(x.sign, u >> x.id & 1 == 1))
        .collect();
    Resolution { vertex: u, circles, seg_circle, states }
}

pub fn qshift(d: &Diagram, u: Vertex) -> i64 {
    d.crossings
        .iter()
        .map(|x| {
            let b = (u >> x.id & 1) as i64;
            if x.sign > 0 {
                -1 - b
            } else {
                2 - b
            }
        })
        .sum()
}

pub fn hdeg(d: &Diagram, u: Vertex) -> i64 {
    popcount(u) as i64 - d.n_minus as i64
}

pub fn surgery_data(d: &Diagram, src: &Resolution, dst: &Resolution, i: usize) -> Result<SurgeryDescriptor> {
    if i >= d.n_crossings() || src.vertex >> i & 1 != 0 || dst.vertex != src.vertex | 1 << i {
        return Err(Error::Invalid(format!(
            "vertices {:b} and {:b} are not adjacent along crossing {i}",
            src.vertex, dst.vertex
        )));
    }
    let x = &d.crossings[i];
    // in the source smoothing (bit 0) ports 0,1 and 2,3 are joined
    let s0 = src.circle_at(d, i, 0);
    let s1 = src.circle_at(d, i, 2);
    let t0 = dst.circle_at(d, i, 0);
    let t1 = dst.circle_at(d, i, 1);
    let kind = if s0 != s1 {
        if t0 != t1 || dst.n_circles() + 1 != src.n_circles() {
            return Err(Error::Invalid("merge does not reduce the circle count".into()));
        }
        SurgeryKind::Merge { a: s0.min(s1), b: s0.max(s1), into: t0 }
    } else {
        if t0 == t1 || dst.n_circles() != src.n_circles() + 1 {
            return Err(Error::Invalid("split does not increase the circle count".into()));
        }
        SurgeryKind::Split { from: s0, c1: t0.min(t1), c2: t0.max(t1) }
    };
    let direction = if x.sign > 0 { Direction::Zip } else { Direction::Unzip };
    Ok(SurgeryDescriptor { crossing: i, direction, kind, site_flow: d.site_flow(i) })
}

/// Target circle of each source circle not touched by the surgery at crossing i.
pub fn carry_circles(src: &Resolution, dst: &Resolution) -> Vec<usize> {
    src.circles.iter().map(|c| dst.seg_circle[c.min_segment()]).collect()
}

/// Lazily materialized cube with per-vertex memoization.
pub struct Cube {
    pub diagram: Diagram,
    memo: Vec<OnceLock<Arc<Resolution>>>,
}

impl Cube {
    pub fn new(diagram: Diagram) -> Result<Cube> {
        let n = diagram.n_crossings();
        if n > 30 {
            return Err(Error::Unsupported(format!("{n} crossings exceed the cube size limit")));
        }
        let memo = (0..1usize << n).map(|_| OnceLock::new()).collect();
        Ok(Cube { diagram, memo })
    }

    pub fn n(&self) -> usize {
        self.diagram.n_crossings()
    }

    pub fn n_vertices(&self) -> usize {
        1 << self.n()
    }

    pub fn resolution(&self, u: Vertex) -> Arc<Resolution> {
        self.memo[u as usize].get_or_init(|| Arc::new(resolve(&self.diagram, u))).clone()
    }

    pub fn surgery(&self, u: Vertex, i: usize) -> SurgeryDescriptor {
        let src = self.resolution(u);
        let dst = self.resolution(u | 1 << i);
        surgery_data(&self.diagram, &src, &dst, i).expect("adjacent vertices")
    }

    /// Edges (u, i) with bit i of u clear, ordered by u then i.
    pub fn edges(&self) -> Vec<(Vertex, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for u in 0..self.n_vertices() as Vertex {
            for i in 0..n {
                if u >> i & 1 == 0 {
                    out.push((u, i));
                }
            }
        }
        out
    }

    /// Faces (u, i, j) with i < j and both bits clear.
    pub fn faces(&self) -> Vec<(Vertex, usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for u in 0..self.n_vertices() as Vertex {
            for i in 0..n {
                for j in i + 1..n {
                    if u >> i & 1 == 0 && u >> j & 1 == 0 {
                        out.push((u, i, j));
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::{build_diagram, parse_pd};

    fn diagram(code: &str) -> Diagram {
        build_diagram(&parse_pd(code).unwrap(), None).unwrap()
    }

    /// Circle count by union-find over port identifications.
    fn uf_circles(d: &Diagram, u: Vertex) -> usize {
        let narcs = d.arcs.len();
        let mut uf = petgraph::unionfind::UnionFind::<usize>::new(narcs.max(1));
        for x in &d.crossings {
            let bit = u >> x.id & 1 == 1;
            let pairs = if bit { [(0, 3), (1, 2)] } else { [(0, 1), (2, 3)] };
            for (p, q) in pairs {
                uf.union(x.arcs[p] as usize - 1, x.arcs[q] as usize - 1);
            }
        }
        let mut roots: Vec<usize> = (0..narcs).map(|a| uf.find(a)).collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len() + d.unknots.len()
    }

    #[test]
    fn trefoil_seifert_and_web_states() {
        // the table trefoil is negative: its oriented state is bit 1
        let d = diagram("PD[X[1,4,2,5],X[3,6,4,1],X[5,2,6,3]]");
        assert_eq!(resolve(&d, 0b111).n_circles(), 2);
        assert_eq!(resolve(&d, 0).n_circles(), 3);
        for u in 0..8 {
            assert_eq!(resolve(&d, u).n_circles(), uf_circles(&d, u));
        }
    }

    #[test]
    fn kink_circle_counts() {
        let d = diagram("PD[X[1,1,2,2]]");
        let oriented = if d.crossings[0].sign > 0 { 0 } else { 1 };
        assert_eq!(resolve(&d, oriented).n_circles(), 2);
        assert_eq!(resolve(&d, 1 - oriented).n_circles(), 1);
    }

    #[test]
    fn hopf_edges() {
        let d = diagram("PD[X[1,3,2,4],X[3,1,4,2]]");
        let r00 = resolve(&d, 0);
        let r01 = resolve(&d, 1);
        let r11 = resolve(&d, 3);
        let e1 = surgery_data(&d, &r00, &r01, 0).unwrap();
        let e2 = surgery_data(&d, &r01, &r11, 1).unwrap();
        assert!(!e1.is_split());
        assert!(e2.is_split());
        assert!(surgery_data(&d, &r00, &r11, 0).is_err());
    }

    #[test]
    fn qshift_values() {
        let pos = diagram("PD[X[1,5,2,4],X[3,1,4,6],X[5,3,6,2]]");
        assert_eq!(qshift(&pos, 0), -3);
        assert_eq!(qshift(&pos, 0b111), -6);
        let neg = diagram("PD[X[1,4,2,5],X[3,6,4,1],X[5,2,6,3]]");
        assert_eq!(qshift(&neg, 0), 6);
    }

    #[test]
    fn every_segment_in_one_circle() {
        let d = diagram("PD[X[4,2,5,1],X[8,6,1,5],X[6,3,7,4],X[2,7,3,8]]");
        for u in 0..16 {
            let r = resolve(&d, u);
            let total: usize = r.circles.iter().map(|c| c.darts.len()).sum();
            assert_eq!(total, d.n_segments());
            for (k, c) in r.circles.iter().enumerate() {
                for dart in &c.darts {
                    assert_eq!(r.seg_circle[dart.seg], k);
                }
            }
        }
    }

    #[test]
    fn edge_changes_circle_count_by_one() {
        let d = diagram("PD[X[4,2,5,1],X[8,6,1,5],X[6,3,7,4],X[2,7,3,8]]");
        let cube = Cube::new(d).unwrap();
        for (u, i) in cube.edges() {
            let a = cube.resolution(u).n_circles() as i64;
            let b = cube.resolution(u | 1 << i).n_circles() as i64;
            let s = cube.surgery(u, i);
            assert_eq!(b - a, if s.is_split() { 1 } else { -1 });
        }
    }
}
