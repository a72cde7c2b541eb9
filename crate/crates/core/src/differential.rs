//! Edge maps in the signed bases, totalization and certification of the complex.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::cube::{carry_circles, popcount, Cube, Direction, Resolution, SurgeryDescriptor, SurgeryKind, Vertex};
use crate::diagram::Diagram;
use crate::error::{Error, Result};
use crate::generators::{enumerate_generators, labels_to_index, Generator};
use crate::sparse::SparseMat;

pub const CONVENTION_TAG: &str = "oriented-gl2-v1";

/// How signs are attached to cube edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignRule {
    /// Merge +1, Split by the site flow.
    SiteFlow,
    /// Zip +1, Unzip by the site flow.
    Anchored,
    /// Every edge +1: ordinary Khovanov conventions.
    Plain,
    /// Tree edges +1, the rest forced by face commutation.
    Gauge,
}

pub fn edge_sign(s: &SurgeryDescriptor, rule: SignRule) -> i8 {
    match rule {
        SignRule::SiteFlow => {
            if s.is_split() {
                s.site_flow
            } else {
                1
            }
        }
        SignRule::Anchored => match s.direction {
            Direction::Zip => 1,
            Direction::Unzip => s.site_flow,
        },
        SignRule::Plain | SignRule::Gauge => 1,
    }
}

/// Target labelings of a merge or split applied to `labels`, all with coefficient +1.
/// `carry` sends every source circle to its target circle; for a split the
/// source circle's entry is ignored.
pub fn frobenius_image(labels: u64, carry: &[usize], kind: &SurgeryKind) -> Vec<u64> {
    let mut base = 0u64;
    let skip = match *kind {
        SurgeryKind::Merge { a, b, .. } => [a, b],
        SurgeryKind::Split { from, .. } => [from, from],
    };
    for (j, &t) in carry.iter().enumerate() {
        if j != skip[0] && j != skip[1] && labels >> j & 1 == 1 {
            base |= 1 << t;
        }
    }
    match *kind {
        SurgeryKind::Merge { a, b, into } => match (labels >> a & 1, labels >> b & 1) {
            (0, 0) => vec![base],
            (1, 1) => vec![],
            _ => vec![base | 1 << into],
        },
        SurgeryKind::Split { from, c1, c2 } => {
            if labels >> from & 1 == 0 {
                vec![base | 1 << c2, base | 1 << c1]
            } else {
                vec![base | 1 << c1 | 1 << c2]
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EdgeMap {
    pub src: Vertex,
    pub crossing: usize,
    pub desc: SurgeryDescriptor,
    pub sign: i8,
    pub n_src: usize,
    pub n_dst: usize,
    /// For each source generator index, the (target index, coefficient) terms.
    pub cols: Vec<Vec<(u32, i8)>>,
}

impl EdgeMap {
    pub fn dst(&self) -> Vertex {
        self.src | 1 << self.crossing
    }

    pub fn to_sparse(&self) -> SparseMat {
        let cols = self
            .cols
            .iter()
            .map(|c| c.iter().map(|&(r, v)| (r as usize, v as i64)).collect())
            .collect();
        SparseMat::from_columns(self.n_dst, cols)
    }

    pub fn entries(&self) -> impl Iterator<Item = i8> + '_ {
        self.cols.iter().flat_map(|c| c.iter().map(|e| e.1))
    }
}

pub fn build_edge_map(src: &Resolution, dst: &Resolution, s: &SurgeryDescriptor, sign: i8) -> EdgeMap {
    let carry = carry_circles(src, dst);
    let k = src.n_circles();
    let kd = dst.n_circles();
    let cols = (0..1usize << k)
        .map(|idx| {
            let labels = crate::generators::index_to_labels(idx, k);
            frobenius_image(labels, &carry, &s.kind)
                .into_iter()
                .map(|t| (labels_to_index(t, kd) as u32, sign))
                .collect()
        })
        .collect();
    EdgeMap { src: src.vertex, crossing: s.crossing, desc: *s, sign, n_src: 1 << k, n_dst: 1 << kd, cols }
}

#[derive(Clone, Debug, Serialize)]
pub struct ComplexMeta {
    pub diagram_hash: String,
    pub tag: String,
    pub rule: SignRule,
}

/// A bigraded complex over the integers whose basis elements are cube generators.
#[derive(Clone, Debug, Serialize)]
pub struct ChainComplex {
    pub h_min: i64,
    /// Generators by homological degree, `groups[k]` in degree `h_min + k`.
    pub groups: Vec<Vec<Generator>>,
    /// `d[k]` maps `groups[k]` to `groups[k + 1]`.
    pub d: Vec<SparseMat>,
    pub meta: ComplexMeta,
}

impl ChainComplex {
    pub fn h_max(&self) -> i64 {
        self.h_min + self.groups.len() as i64 - 1
    }

    pub fn group(&self, h: i64) -> &[Generator] {
        let k = h - self.h_min;
        if k < 0 || k as usize >= self.groups.len() {
            &[]
        } else {
            &self.groups[k as usize]
        }
    }

    /// Differential out of degree h (as a matrix rows = degree h+1).
    pub fn diff(&self, h: i64) -> SparseMat {
        let k = h - self.h_min;
        if k >= 0 && (k as usize) < self.d.len() {
            self.d[k as usize].clone()
        } else {
            SparseMat::zeros(self.group(h + 1).len(), self.group(h).len())
        }
    }

    pub fn rank(&self) -> usize {
        self.groups.iter().map(|g| g.len()).sum()
    }

    pub fn d_squared_zero(&self) -> bool {
        self.d.windows(2).all(|w| w[1].mul(&w[0]).is_zero())
    }

    pub fn to_json(&self, n: usize) -> Value {
        let groups: Vec<Value> = self
            .groups
            .iter()
            .enumerate()
            .map(|(k, g)| {
                json!({
                    "h": self.h_min + k as i64,
                    "generators": g.iter().map(|x| x.to_json(n)).collect::<Vec<_>>(),
                })
            })
            .collect();
        let diffs: Vec<Value> = self
            .d
            .iter()
            .enumerate()
            .map(|(k, m)| {
                json!({
                    "h": self.h_min + k as i64,
                    "rows": m.nrows,
                    "cols": m.ncols,
                    "entries": m.triplets().iter().map(|&(r, c, v)| json!([r, c, v])).collect::<Vec<_>>(),
                })
            })
            .collect();
        json!({
            "tag": self.meta.tag,
            "diagram": self.meta.diagram_hash,
            "sign_rule": self.meta.rule,
            "groups": groups,
            "differentials": diffs,
        })
    }
}

pub fn cube_sign(u: Vertex, i: usize) -> i64 {
    if popcount(u & ((1 << i) - 1)) % 2 == 0 {
        1
    } else {
        -1
    }
}

/// The cube together with its edge maps and the totalized complex.
pub struct CubeComplex {
    pub cube: Cube,
    pub rule: SignRule,
    pub edge_index: HashMap<(Vertex, usize), usize>,
    pub edges: Vec<EdgeMap>,
    /// Position of each vertex's first generator inside its homological group.
    pub offsets: Vec<usize>,
    pub complex: ChainComplex,
}

impl CubeComplex {
    pub fn build(d: Diagram, rule: SignRule) -> Result<CubeComplex> {
        let cube = Cube::new(d)?;
        let edge_list = cube.edges();
        let base_rule = if rule == SignRule::Gauge { SignRule::Plain } else { rule };
        let mut edges: Vec<EdgeMap> = edge_list
            .par_iter()
            .map(|&(u, i)| {
                let src = cube.resolution(u);
                let dst = cube.resolution(u | 1 << i);
                let s = cube.surgery(u, i);
                build_edge_map(&src, &dst, &s, edge_sign(&s, base_rule))
            })
            .collect();
        let edge_index: HashMap<(Vertex, usize), usize> =
            edge_list.iter().enumerate().map(|(k, &e)| (e, k)).collect();
        if rule == SignRule::Gauge {
            let signs = gauge_solve(&cube, &edges, &edge_index)?;
            for (e, s) in edges.iter_mut().zip(signs) {
                e.sign = s;
                for col in e.cols.iter_mut() {
                    for t in col.iter_mut() {
                        t.1 = s;
                    }
                }
            }
        }
        Self::assemble(cube, rule, edges, edge_index)
    }

    /// Totalizes already computed edge maps.
    pub fn assemble(
        cube: Cube,
        rule: SignRule,
        edges: Vec<EdgeMap>,
        edge_index: HashMap<(Vertex, usize), usize>,
    ) -> Result<CubeComplex> {
        let d = &cube.diagram;
        let n = cube.n();
        let h_min = -(d.n_minus as i64);
        let mut groups: Vec<Vec<Generator>> = vec![Vec::new(); n + 1];
        let mut offsets = vec![0usize; cube.n_vertices()];
        let gens: Vec<Vec<Generator>> = (0..cube.n_vertices() as Vertex)
            .into_par_iter()
            .map(|u| enumerate_generators(d, &cube.resolution(u)))
            .collect();
        for (u, g) in gens.into_iter().enumerate() {
            let k = popcount(u as Vertex);
            offsets[u] = groups[k].len();
            groups[k].extend(g);
        }
        let mut triplets: Vec<Vec<(usize, usize, i64)>> = vec![Vec::new(); n];
        for e in &edges {
            let k = popcount(e.src);
            let s = cube_sign(e.src, e.crossing);
            let (ro, co) = (offsets[e.dst() as usize], offsets[e.src as usize]);
            for (x, col) in e.cols.iter().enumerate() {
                for &(y, v) in col {
                    triplets[k].push((ro + y as usize, co + x, s * v as i64));
                }
            }
        }
        let dmats = triplets
            .into_iter()
            .enumerate()
            .map(|(k, t)| SparseMat::from_triplets(groups[k + 1].len(), groups[k].len(), t))
            .collect();
        let meta = ComplexMeta { diagram_hash: d.hash(), tag: CONVENTION_TAG.to_string(), rule };
        let complex = ChainComplex { h_min, groups, d: dmats, meta };
        Ok(CubeComplex { cube, rule, edge_index, edges, offsets, complex })
    }

    pub fn edge(&self, u: Vertex, i: usize) -> &EdgeMap {
        &self.edges[self.edge_index[&(u, i)]]
    }

    pub fn diagram(&self) -> &Diagram {
        &self.cube.diagram
    }

    /// Position of a generator inside its homological group.
    pub fn position(&self, g: &Generator) -> usize {
        self.offsets[g.vertex as usize] + g.index()
    }
}

pub fn totalize(d: &Diagram, rule: SignRule) -> Result<ChainComplex> {
    Ok(CubeComplex::build(d.clone(), rule)?.complex)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Vacuous,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub status: Status,
    pub checked: usize,
    pub failures: Vec<String>,
}

impl Check {
    fn from_failures(checked: usize, mut failures: Vec<String>) -> Check {
        failures.sort();
        let status = if checked == 0 {
            Status::Vacuous
        } else if failures.is_empty() {
            Status::Pass
        } else {
            Status::Fail
        };
        failures.truncate(20);
        Check { status, checked, failures }
    }

    pub fn ok(&self) -> bool {
        self.status != Status::Fail
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ComplexReport {
    pub sign_coherence: Check,
    pub face_commutation: Check,
    pub d_squared: Check,
    pub anchors: Check,
    pub no_cancellation: Check,
}

impl ComplexReport {
    pub fn ok(&self) -> bool {
        self.sign_coherence.ok()
            && self.face_commutation.ok()
            && self.d_squared.ok()
            && self.anchors.ok()
            && self.no_cancellation.ok()
    }
}

fn vertex_name(u: Vertex, n: usize) -> String {
    (0..n).map(|i| if u >> i & 1 == 1 { '1' } else { '0' }).collect()
}

/// Composite of two edges from `u`, as target index -> list of path coefficients.
fn path_terms(first: &EdgeMap, second: &EdgeMap, x: usize, out: &mut HashMap<u32, Vec<i64>>) {
    for &(y, a) in &first.cols[x] {
        for &(z, b) in &second.cols[y as usize] {
            out.entry(z).or_default().push(a as i64 * b as i64);
        }
    }
}

pub fn verify_complex(cc: &CubeComplex) -> ComplexReport {
    let n = cc.cube.n();

    // sign coherence and magnitude pattern
    let coherence: Vec<String> = cc
        .edges
        .par_iter()
        .filter_map(|e| {
            let src = cc.cube.resolution(e.src);
            let dst = cc.cube.resolution(e.dst());
            let plain = build_edge_map(&src, &dst, &e.desc, 1);
            let signs: Vec<i8> = e.entries().collect();
            let uniform = signs.iter().all(|&v| v == e.sign) && e.sign.abs() == 1;
            let pattern = e
                .cols
                .iter()
                .zip(&plain.cols)
                .all(|(a, b)| a.iter().map(|t| t.0).eq(b.iter().map(|t| t.0)));
            (!uniform || !pattern).then(|| {
                format!("edge {}+{}: entries not uniformly {}", vertex_name(e.src, n), e.crossing, e.sign)
            })
        })
        .collect();

    let faces = cc.cube.faces();
    let results: Vec<(Option<String>, Option<String>)> = faces
        .par_iter()
        .map(|&(u, i, j)| {
            let a1 = cc.edge(u, i);
            let a2 = cc.edge(u | 1 << i, j);
            let b1 = cc.edge(u, j);
            let b2 = cc.edge(u | 1 << j, i);
            let mut commute_fail = None;
            let mut cancel_fail = None;
            for x in 0..a1.n_src {
                let mut p = HashMap::new();
                let mut q = HashMap::new();
                path_terms(a1, a2, x, &mut p);
                path_terms(b1, b2, x, &mut q);
                let name = || format!("face {} ({},{}) generator {x}", vertex_name(u, n), i, j);
                let mut targets: Vec<u32> = p.keys().chain(q.keys()).copied().collect();
                targets.sort_unstable();
                targets.dedup();
                for z in targets {
                    let sp: i64 = p.get(&z).map(|v| v.iter().sum()).unwrap_or(0);
                    let sq: i64 = q.get(&z).map(|v| v.iter().sum()).unwrap_or(0);
                    if sp != sq && commute_fail.is_none() {
                        commute_fail = Some(format!("{} target {z}: {sp} vs {sq}", name()));
                    }
                    let all: Vec<i64> = p.get(&z).into_iter().chain(q.get(&z)).flatten().copied().collect();
                    if all.iter().any(|&v| v > 0) && all.iter().any(|&v| v < 0) && cancel_fail.is_none() {
                        cancel_fail = Some(format!("{} target {z}: opposite path signs", name()));
                    }
                }
            }
            (commute_fail, cancel_fail)
        })
        .collect();
    let commute: Vec<String> = results.iter().filter_map(|r| r.0.clone()).collect();
    let cancel: Vec<String> = results.iter().filter_map(|r| r.1.clone()).collect();

    let dsq: Vec<String> = cc
        .complex
        .d
        .windows(2)
        .enumerate()
        .filter_map(|(k, w)| {
            let p = w[1].mul(&w[0]);
            (!p.is_zero()).then(|| format!("d^2 nonzero out of degree {}", cc.complex.h_min + k as i64))
        })
        .collect();
    let dsq_checked = cc.complex.d.len().saturating_sub(1);

    let mut anchor_checked = 0;
    let mut anchors = Vec::new();
    for e in &cc.edges {
        let expect = match (e.desc.direction, e.desc.is_split()) {
            (Direction::Unzip, true) => e.desc.site_flow,
            (Direction::Zip, false) => 1,
            _ => continue,
        };
        anchor_checked += 1;
        if e.entries().any(|v| v != expect) {
            anchors.push(format!(
                "edge {}+{}: expected entries in {{0,{}}}",
                vertex_name(e.src, n),
                e.crossing,
                expect
            ));
        }
    }

    ComplexReport {
        sign_coherence: Check::from_failures(cc.edges.len(), coherence),
        face_commutation: Check::from_failures(faces.len(), commute),
        d_squared: Check::from_failures(dsq_checked, dsq),
        anchors: Check::from_failures(anchor_checked, anchors),
        no_cancellation: Check::from_failures(faces.len(), cancel),
    }
}

/// Signs for the magnitude patterns in `edges` making every face with a
/// nonzero composite commute. Tree edges (into v from v minus its lowest bit)
/// get +1; every other edge is forced by the face below it through that tree edge.
pub fn gauge_solve(cube: &Cube, edges: &[EdgeMap], index: &HashMap<(Vertex, usize), usize>) -> Result<Vec<i8>> {
    let n = cube.n();
    let mut signs: Vec<Option<i8>> = vec![None; edges.len()];
    for (k, e) in edges.iter().enumerate() {
        if e.dst().trailing_zeros() as usize == e.crossing {
            signs[k] = Some(1);
        }
    }
    let mut order: Vec<usize> = (0..edges.len()).filter(|&k| signs[k].is_none()).collect();
    order.sort_by_key(|&k| (popcount(edges[k].dst()), edges[k].src, edges[k].crossing));
    let nonzero_face = |u: Vertex, i: usize, j: usize| -> bool {
        let a1 = &edges[index[&(u, i)]];
        let a2 = &edges[index[&(u | 1 << i, j)]];
        (0..a1.n_src).any(|x| {
            let mut p = HashMap::new();
            path_terms(a1, a2, x, &mut p);
            p.values().any(|v| v.iter().sum::<i64>() != 0)
        })
    };
    for k in order {
        let (u, i) = (edges[k].src, edges[k].crossing);
        let low = (u | 1 << i).trailing_zeros() as usize;
        // face with bottom w = u - e_low, tree edge (w + e_i, low) into v
        let j = low;
        let w = u & !(1 << j);
        let mut s = 1i8;
        if nonzero_face(w, i.min(j), i.max(j)) {
            let get = |a: Vertex, b: usize| signs[index[&(a, b)]].expect("earlier edge");
            s = get(w, j) * get(w, i) * get(w | 1 << i, j);
        }
        signs[k] = Some(s);
    }
    let signs: Vec<i8> = signs.into_iter().map(|s| s.unwrap()).collect();
    // every face with a nonzero composite must now commute
    for (u, i, j) in cube.faces() {
        let s = |a: Vertex, b: usize| signs[index[&(a, b)]];
        if nonzero_face(u, i, j) && s(u, i) * s(u | 1 << i, j) != s(u, j) * s(u | 1 << j, i) {
            return Err(Error::Verification(format!(
                "gauge propagation inconsistent at face {} ({i},{j})",
                vertex_name(u, n)
            )));
        }
    }
    Ok(signs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::{resolve, surgery_data};
    use crate::diagram::{build_diagram, parse_pd};
    use crate::generators::Label;

    fn diagram(code: &str) -> Diagram {
        build_diagram(&parse_pd(code).unwrap(), None).unwrap()
    }

    /// Frobenius structure as a pairing: m(a, b) and delta(a) computed from
    /// the algebra Z[X]/X^2 by polynomial multiplication.
    fn mult(a: Label, b: Label) -> Option<Label> {
        match (a, b) {
            (Label::One, Label::One) => Some(Label::One),
            (Label::X, Label::X) => None,
            _ => Some(Label::X),
        }
    }

    #[test]
    fn merge_table_matches_algebra() {
        let kind = SurgeryKind::Merge { a: 0, b: 1, into: 0 };
        for labels in 0..4u64 {
            let a = if labels & 1 == 1 { Label::X } else { Label::One };
            let b = if labels & 2 == 2 { Label::X } else { Label::One };
            let img = frobenius_image(labels, &[0, 0], &kind);
            let expected: Vec<u64> = mult(a, b).map(|l| (l == Label::X) as u64).into_iter().collect();
            assert_eq!(img, expected);
        }
    }

    #[test]
    fn split_table_is_comultiplication() {
        // delta(1) = 1 (x) X + X (x) 1, delta(X) = X (x) X
        let kind = SurgeryKind::Split { from: 0, c1: 0, c2: 1 };
        let mut one = frobenius_image(0, &[0], &kind);
        one.sort_unstable();
        assert_eq!(one, vec![0b01, 0b10]);
        assert_eq!(frobenius_image(1, &[0], &kind), vec![0b11]);
    }

    #[test]
    fn edge_sign_anchors() {
        let d = diagram("PD[X[1,1,2,2]]");
        let s = surgery_data(&d, &resolve(&d, 0), &resolve(&d, 1), 0).unwrap();
        assert_eq!(s.direction, Direction::Zip);
        assert!(!s.is_split());
        assert_eq!(edge_sign(&s, SignRule::SiteFlow), 1);
        assert_eq!(edge_sign(&s, SignRule::Anchored), 1);
        let m = diagram("PD[X[1,2,2,1]]");
        let s = surgery_data(&m, &resolve(&m, 0), &resolve(&m, 1), 0).unwrap();
        assert_eq!(s.direction, Direction::Unzip);
        assert!(s.is_split());
        assert_eq!(edge_sign(&s, SignRule::SiteFlow), s.site_flow);
        assert_eq!(edge_sign(&s, SignRule::Anchored), s.site_flow);
    }

    #[test]
    fn empty_link_complex() {
        let c = totalize(&diagram("PD[]"), SignRule::Anchored).unwrap();
        assert_eq!(c.groups.len(), 1);
        assert_eq!(c.groups[0].len(), 1);
        assert!(c.d.is_empty());
    }

    #[test]
    fn trefoil_chain_ranks() {
        let c = totalize(&diagram("PD[X[1,4,2,5],X[3,6,4,1],X[5,2,6,3]]"), SignRule::Anchored).unwrap();
        let ranks: Vec<usize> = c.groups.iter().map(|g| g.len()).collect();
        // circle counts 3 | 2,2,2 | 1,1,1 | 2 for the negative trefoil
        assert_eq!(ranks, vec![8, 12, 6, 4]);
        assert!(c.d_squared_zero());
    }

    #[test]
    fn differential_preserves_q() {
        let c = totalize(&diagram("PD[X[4,2,5,1],X[8,6,1,5],X[6,3,7,4],X[2,7,3,8]]"), SignRule::Anchored).unwrap();
        for (k, m) in c.d.iter().enumerate() {
            for (r, col, _) in m.triplets() {
                assert_eq!(c.groups[k + 1][r].q, c.groups[k][col].q);
            }
        }
    }

    #[test]
    fn gauge_on_hopf_commutes() {
        let cc = CubeComplex::build(diagram("PD[X[1,3,2,4],X[3,1,4,2]]"), SignRule::Gauge).unwrap();
        assert_eq!(cc.edges.len(), 4);
        assert!(verify_complex(&cc).face_commutation.ok());
    }

    #[test]
    fn flipped_sign_is_detected() {
        let cc = CubeComplex::build(diagram("PD[X[1,3,2,4],X[3,1,4,2]]"), SignRule::Plain).unwrap();
        let CubeComplex { cube, rule, edge_index, mut edges, .. } = cc;
        edges[0].cols[0][0].1 = -1;
        let bad = CubeComplex::assemble(cube, rule, edges, edge_index).unwrap();
        let report = verify_complex(&bad);
        assert_eq!(report.sign_coherence.status, Status::Fail);
        assert_eq!(report.face_commutation.status, Status::Fail);
    }
}
