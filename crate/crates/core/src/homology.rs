//! Exact integral homology: unit-pivot reduction, Smith normal form, bases and induced maps.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::differential::{ChainComplex, ComplexMeta};
use crate::error::{Error, Result};
use crate::generators::Generator;
use crate::sparse::SparseMat;

// ---------------------------------------------------------------------------
// Smith normal form

pub type Dense = Vec<Vec<BigInt>>;

pub fn dense_identity(n: usize) -> Dense {
    (0..n).map(|i| (0..n).map(|j| if i == j { BigInt::one() } else { BigInt::zero() }).collect()).collect()
}

pub fn dense_from_sparse(m: &SparseMat) -> Dense {
    let mut out = vec![vec![BigInt::zero(); m.ncols]; m.nrows];
    for (i, j, v) in m.triplets() {
        out[i][j] = BigInt::from(v);
    }
    out
}

pub fn dense_mul(a: &Dense, b: &Dense, inner: usize, ncols: usize) -> Dense {
    a.iter()
        .map(|row| {
            (0..ncols)
                .map(|j| {
                    let mut s = BigInt::zero();
                    for k in 0..inner {
                        if !row[k].is_zero() && !b[k][j].is_zero() {
                            s += &row[k] * &b[k][j];
                        }
                    }
                    s
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct Snf {
    /// Nonzero invariant factors d_1 | d_2 | ..., all positive.
    pub diag: Vec<BigInt>,
    pub rows: usize,
    pub cols: usize,
    /// `left * m * right` is diagonal; inverses are kept alongside.
    pub left: Dense,
    pub left_inv: Dense,
    pub right: Dense,
    pub right_inv: Dense,
}

impl Snf {
    pub fn rank(&self) -> usize {
        self.diag.len()
    }
}

struct SnfState {
    m: Dense,
    l: Dense,
    li: Dense,
    r: Dense,
    ri: Dense,
    track: bool,
}

impl SnfState {
    fn swap_rows(&mut self, i: usize, j: usize) {
        if i == j {
            return;
        }
        self.m.swap(i, j);
        if self.track {
            self.l.swap(i, j);
            for row in self.li.iter_mut() {
                row.swap(i, j);
            }
        }
    }

    fn swap_cols(&mut self, i: usize, j: usize) {
        if i == j {
            return;
        }
        for row in self.m.iter_mut() {
            row.swap(i, j);
        }
        if self.track {
            for row in self.r.iter_mut() {
                row.swap(i, j);
            }
            self.ri.swap(i, j);
        }
    }

    /// row_i += c * row_j
    fn add_row(&mut self, i: usize, j: usize, c: &BigInt) {
        let src = self.m[j].clone();
        for (a, b) in self.m[i].iter_mut().zip(&src) {
            if !b.is_zero() {
                *a += c * b;
            }
        }
        if self.track {
            let src = self.l[j].clone();
            for (a, b) in self.l[i].iter_mut().zip(&src) {
                if !b.is_zero() {
                    *a += c * b;
                }
            }
            for row in self.li.iter_mut() {
                if !row[i].is_zero() {
                    let t = c * &row[i];
                    row[j] -= t;
                }
            }
        }
    }

    /// col_i += c * col_j
    fn add_col(&mut self, i: usize, j: usize, c: &BigInt) {
        for row in self.m.iter_mut() {
            if !row[j].is_zero() {
                let t = c * &row[j];
                row[i] += t;
            }
        }
        if self.track {
            for row in self.r.iter_mut() {
                if !row[j].is_zero() {
                    let t = c * &row[j];
                    row[i] += t;
                }
            }
            let src = self.ri[i].clone();
            for (a, b) in self.ri[j].iter_mut().zip(&src) {
                if !b.is_zero() {
                    *a -= c * b;
                }
            }
        }
    }

    fn negate_row(&mut self, i: usize) {
        for a in self.m[i].iter_mut() {
            *a = -&*a;
        }
        if self.track {
            for a in self.l[i].iter_mut() {
                *a = -&*a;
            }
            for row in self.li.iter_mut() {
                row[i] = -&row[i];
            }
        }
    }
}

/// Smith normal form with minimal-absolute-value pivoting.
pub fn smith_normal_form(m: &Dense, rows: usize, cols: usize) -> Snf {
    snf_impl(m, rows, cols, true)
}

fn snf_impl(m: &Dense, rows: usize, cols: usize, track: bool) -> Snf {
    let (l, li, r, ri) = if track {
        (dense_identity(rows), dense_identity(rows), dense_identity(cols), dense_identity(cols))
    } else {
        (Vec::new(), Vec::new(), Vec::new(), Vec::new())
    };
    let mut s = SnfState { m: m.clone(), l, li, r, ri, track };
    let mut diag = Vec::new();
    let mut t = 0;
    while t < rows.min(cols) {
        // smallest nonzero entry of the trailing block
        let mut best: Option<(usize, usize)> = None;
        for i in t..rows {
            for j in t..cols {
                if !s.m[i][j].is_zero() && best.is_none_or(|(bi, bj)| s.m[i][j].abs() < s.m[bi][bj].abs()) {
                    best = Some((i, j));
                }
            }
        }
        let Some((pi, pj)) = best else { break };
        s.swap_rows(t, pi);
        s.swap_cols(t, pj);
        loop {
            let mut changed = false;
            for i in t + 1..rows {
                if s.m[i][t].is_zero() {
                    continue;
                }
                let q = s.m[i][t].div_floor(&s.m[t][t]);
                s.add_row(i, t, &-q);
                if !s.m[i][t].is_zero() {
                    s.swap_rows(t, i);
                    changed = true;
                }
            }
            for j in t + 1..cols {
                if s.m[t][j].is_zero() {
                    continue;
                }
                let q = s.m[t][j].div_floor(&s.m[t][t]);
                s.add_col(j, t, &-q);
                if !s.m[t][j].is_zero() {
                    s.swap_cols(t, j);
                    changed = true;
                }
            }
            if changed {
                continue;
            }
            // divisibility of the trailing block
            let p = s.m[t][t].clone();
            let bad = (t + 1..rows).find(|&i| (t + 1..cols).any(|j| !(&s.m[i][j] % &p).is_zero()));
            match bad {
                Some(i) => s.add_row(t, i, &BigInt::one()),
                None => break,
            }
        }
        if s.m[t][t].is_negative() {
            s.negate_row(t);
        }
        diag.push(s.m[t][t].clone());
        t += 1;
    }
    Snf { diag, rows, cols, left: s.l, left_inv: s.li, right: s.r, right_inv: s.ri }
}

/// Invariant factors only.
pub fn invariant_factors(m: &SparseMat) -> Vec<BigInt> {
    snf_impl(&dense_from_sparse(m), m.nrows, m.ncols, false).diag
}

// ---------------------------------------------------------------------------
// Gaussian elimination of unit entries

/// A complex under elimination; survivors keep their original indices.
pub struct Elimination {
    pub h_min: i64,
    pub gens: Vec<Vec<Generator>>,
    pub alive: Vec<Vec<bool>>,
    out: Vec<Vec<BTreeMap<usize, i64>>>,
    inc: Vec<Vec<BTreeMap<usize, i64>>>,
    track: bool,
    /// Retraction rows: current generator -> (original generator -> coefficient).
    r_rows: Vec<Vec<BTreeMap<usize, i64>>>,
    /// Inclusion columns: current generator -> (original generator -> coefficient).
    i_cols: Vec<Vec<BTreeMap<usize, i64>>>,
}

fn checked_axpy(target: &mut BTreeMap<usize, i64>, coef: i64, src: &BTreeMap<usize, i64>) -> Result<()> {
    for (&k, &v) in src {
        let add = coef.checked_mul(v).ok_or_else(overflow)?;
        let e = target.entry(k).or_insert(0);
        *e = e.checked_add(add).ok_or_else(overflow)?;
        if *e == 0 {
            target.remove(&k);
        }
    }
    Ok(())
}

fn overflow() -> Error {
    Error::Unsupported("coefficient overflow during elimination".into())
}

impl Elimination {
    pub fn new(c: &ChainComplex, track: bool) -> Elimination {
        let ng = c.groups.len();
        let mut out: Vec<Vec<BTreeMap<usize, i64>>> = c.groups.iter().map(|g| vec![BTreeMap::new(); g.len()]).collect();
        let mut inc: Vec<Vec<BTreeMap<usize, i64>>> = out.clone();
        for (k, m) in c.d.iter().enumerate() {
            for (y, x, v) in m.triplets() {
                out[k][x].insert(y, v);
                inc[k + 1][y].insert(x, v);
            }
        }
        let unit = |k: usize| -> Vec<BTreeMap<usize, i64>> {
            if track {
                (0..c.groups[k].len()).map(|i| BTreeMap::from([(i, 1)])).collect()
            } else {
                Vec::new()
            }
        };
        Elimination {
            h_min: c.h_min,
            gens: c.groups.clone(),
            alive: c.groups.iter().map(|g| vec![true; g.len()]).collect(),
            out,
            inc,
            track,
            r_rows: (0..ng).map(unit).collect(),
            i_cols: (0..ng).map(unit).collect(),
        }
    }

    pub fn n_degrees(&self) -> usize {
        self.gens.len()
    }

    pub fn coefficient(&self, k: usize, x: usize, y: usize) -> i64 {
        self.out[k][x].get(&y).copied().unwrap_or(0)
    }

    pub fn outgoing(&self, k: usize, x: usize) -> &BTreeMap<usize, i64> {
        &self.out[k][x]
    }

    /// Cancels x (degree k) against y (degree k+1); d(x -> y) must be a unit.
    pub fn eliminate(&mut self, k: usize, x: usize, y: usize) -> Result<()> {
        let e = self.coefficient(k, x, y);
        if e.abs() != 1 {
            return Err(Error::Invalid(format!("entry ({x},{y}) in degree {k} is not a unit")));
        }
        let dx: BTreeMap<usize, i64> = self.out[k][x].iter().filter(|(&b, _)| b != y).map(|(&b, &v)| (b, v)).collect();
        let into_y: Vec<(usize, i64)> =
            self.inc[k + 1][y].iter().filter(|(&a, _)| a != x).map(|(&a, &v)| (a, v)).collect();
        // d'(a -> b) = d(a -> b) - d(a -> y) e d(x -> b)
        for &(a, g) in &into_y {
            let coef = -g.checked_mul(e).ok_or_else(overflow)?;
            let mut row = std::mem::take(&mut self.out[k][a]);
            checked_axpy(&mut row, coef, &dx)?;
            for &b in dx.keys() {
                let nv = row.get(&b).copied().unwrap_or(0);
                if nv == 0 {
                    self.inc[k + 1][b].remove(&a);
                } else {
                    self.inc[k + 1][b].insert(a, nv);
                }
            }
            self.out[k][a] = row;
        }
        if self.track {
            // r: rows of dx targets absorb -e d(x->b) r_y; inclusion: a absorbs -d(a->y) e x
            let ry = std::mem::take(&mut self.r_rows[k + 1][y]);
            for (&b, &v) in &dx {
                let coef = -e.checked_mul(v).ok_or_else(overflow)?;
                let mut row = std::mem::take(&mut self.r_rows[k + 1][b]);
                checked_axpy(&mut row, coef, &ry)?;
                self.r_rows[k + 1][b] = row;
            }
            let ix = std::mem::take(&mut self.i_cols[k][x]);
            for &(a, g) in &into_y {
                let coef = -g.checked_mul(e).ok_or_else(overflow)?;
                let mut col = std::mem::take(&mut self.i_cols[k][a]);
                checked_axpy(&mut col, coef, &ix)?;
                self.i_cols[k][a] = col;
            }
            self.r_rows[k][x].clear();
        }
        self.remove(k, x);
        self.remove(k + 1, y);
        Ok(())
    }

    fn remove(&mut self, k: usize, g: usize) {
        self.alive[k][g] = false;
        for (t, _) in std::mem::take(&mut self.out[k][g]) {
            self.inc[k + 1][t].remove(&g);
        }
        for (s, _) in std::mem::take(&mut self.inc[k][g]) {
            self.out[k - 1][s].remove(&g);
        }
        if self.track {
            self.r_rows[k][g].clear();
            self.i_cols[k][g].clear();
        }
    }

    /// Eliminates unit entries until none remain, in a deterministic order.
    pub fn reduce_all(&mut self) -> Result<()> {
        loop {
            let mut progress = false;
            for k in 0..self.n_degrees().saturating_sub(1) {
                for x in 0..self.gens[k].len() {
                    if !self.alive[k][x] {
                        continue;
                    }
                    let pick = self.out[k][x]
                        .iter()
                        .filter(|(_, &v)| v.abs() == 1)
                        .min_by_key(|(&y, _)| (self.inc[k + 1][y].len(), y))
                        .map(|(&y, _)| y);
                    if let Some(y) = pick {
                        self.eliminate(k, x, y)?;
                        progress = true;
                    }
                }
            }
            if !progress {
                return Ok(());
            }
        }
    }

    pub fn finish(self, meta: ComplexMeta) -> Reduced {
        let keep: Vec<Vec<usize>> =
            self.alive.iter().map(|a| (0..a.len()).filter(|&i| a[i]).collect()).collect();
        let pos: Vec<BTreeMap<usize, usize>> =
            keep.iter().map(|k| k.iter().enumerate().map(|(p, &i)| (i, p)).collect()).collect();
        let groups: Vec<Vec<Generator>> =
            keep.iter().zip(&self.gens).map(|(k, g)| k.iter().map(|&i| g[i]).collect()).collect();
        let d = (0..groups.len().saturating_sub(1))
            .map(|k| {
                let t = keep[k].iter().enumerate().flat_map(|(c, &x)| {
                    let pos = &pos;
                    self.out[k][x].iter().map(move |(&y, &v)| (pos[k + 1][&y], c, v))
                });
                SparseMat::from_triplets(groups[k + 1].len(), groups[k].len(), t.collect::<Vec<_>>())
            })
            .collect();
        let (retract, include) = if self.track {
            let retract = (0..groups.len())
                .map(|k| {
                    let t: Vec<(usize, usize, i64)> = keep[k]
                        .iter()
                        .enumerate()
                        .flat_map(|(p, &g)| self.r_rows[k][g].iter().map(move |(&o, &v)| (p, o, v)))
                        .collect();
                    SparseMat::from_triplets(keep[k].len(), self.gens[k].len(), t)
                })
                .collect();
            let include = (0..groups.len())
                .map(|k| {
                    let t: Vec<(usize, usize, i64)> = keep[k]
                        .iter()
                        .enumerate()
                        .flat_map(|(p, &g)| self.i_cols[k][g].iter().map(move |(&o, &v)| (o, p, v)))
                        .collect();
                    SparseMat::from_triplets(self.gens[k].len(), keep[k].len(), t)
                })
                .collect();
            (retract, include)
        } else {
            (Vec::new(), Vec::new())
        };
        Reduced { complex: ChainComplex { h_min: self.h_min, groups, d, meta }, keep, retract, include }
    }
}

/// Result of elimination: a smaller homotopy equivalent complex.
pub struct Reduced {
    pub complex: ChainComplex,
    /// Original indices of the survivors, per degree.
    pub keep: Vec<Vec<usize>>,
    /// Chain maps original -> reduced and reduced -> original (empty unless tracked).
    pub retract: Vec<SparseMat>,
    pub include: Vec<SparseMat>,
}

pub fn reduce(c: &ChainComplex, track: bool) -> Result<Reduced> {
    let mut e = Elimination::new(c, track);
    e.reduce_all()?;
    Ok(e.finish(c.meta.clone()))
}

// ---------------------------------------------------------------------------
// Bigraded groups

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct GroupEntry {
    pub free: usize,
    /// Prime-power orders, sorted.
    pub torsion: Vec<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BigradedGroup {
    pub entries: BTreeMap<(i64, i64), GroupEntry>,
}

fn prime_powers(n: &BigInt) -> Result<Vec<u64>> {
    let mut n = n.to_u64().ok_or_else(|| Error::Unsupported(format!("torsion order {n} too large")))?;
    let mut out = Vec::new();
    let mut p = 2u64;
    while p * p <= n {
        if n % p == 0 {
            let mut q = 1;
            while n % p == 0 {
                n /= p;
                q *= p;
            }
            out.push(q);
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    Ok(out)
}

impl BigradedGroup {
    fn add(&mut self, h: i64, q: i64, free: usize, torsion: &[BigInt]) -> Result<()> {
        let mut tors = Vec::new();
        for t in torsion {
            tors.extend(prime_powers(t)?);
        }
        if free == 0 && tors.is_empty() {
            return Ok(());
        }
        let e = self.entries.entry((h, q)).or_default();
        e.free += free;
        e.torsion.extend(tors);
        e.torsion.sort_unstable();
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_torsion(&self) -> usize {
        self.entries.values().map(|e| e.torsion.len()).sum()
    }

    /// Graded Euler characteristic as q-degree -> coefficient (free parts only).
    pub fn euler(&self) -> BTreeMap<i64, i64> {
        let mut out = BTreeMap::new();
        for (&(h, q), e) in &self.entries {
            let s = if h.rem_euclid(2) == 0 { 1 } else { -1 };
            *out.entry(q).or_insert(0) += s * e.free as i64;
        }
        out.retain(|_, v| *v != 0);
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("h,q,free_rank,torsion\n");
        for (&(h, q), e) in &self.entries {
            let t: Vec<String> = e.torsion.iter().map(|x| x.to_string()).collect();
            s.push_str(&format!("{h},{q},{},{}\n", e.free, t.join(" ")));
        }
        s
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.entries
                .iter()
                .map(|(&(h, q), e)| json!({"h": h, "q": q, "free_rank": e.free, "torsion": e.torsion}))
                .collect(),
        )
    }

    /// Rows in the corpus table format (h, q, free, torsion).
    pub fn rows(&self) -> Vec<(i64, i64, usize, Vec<u64>)> {
        self.entries.iter().map(|(&(h, q), e)| (h, q, e.free, e.torsion.clone())).collect()
    }
}

fn monomial(h: i64, q: i64) -> String {
    let mut s = String::new();
    match h {
        0 => {}
        1 => s.push('t'),
        _ => s.push_str(&format!("t^{h}")),
    }
    match q {
        0 => {}
        1 => s.push('q'),
        _ => s.push_str(&format!("q^{q}")),
    }
    s
}

/// Terms ordered by h ascending, then q descending; torsion as `(Z/n)`.
pub fn poincare_string(g: &BigradedGroup) -> String {
    let mut keys: Vec<(i64, i64)> = g.entries.keys().copied().collect();
    keys.sort_by_key(|&(h, q)| (h, -q));
    let mut terms = Vec::new();
    for (h, q) in keys {
        let e = &g.entries[&(h, q)];
        let m = monomial(h, q);
        if e.free > 0 {
            let base = if m.is_empty() { "1".to_string() } else { m.clone() };
            terms.push(if e.free == 1 { base } else { format!("{}{}", e.free, if m.is_empty() { "" } else { &m }) });
        }
        let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
        for &t in &e.torsion {
            *counts.entry(t).or_insert(0) += 1;
        }
        for (t, c) in counts {
            let group = if c == 1 { format!("(Z/{t})") } else { format!("(Z/{t})^{c}") };
            terms.push(format!("{}{group}", if m.is_empty() { "1" } else { &m }));
        }
    }
    if terms.is_empty() {
        "0".to_string()
    } else {
        terms.join(" + ")
    }
}

// ---------------------------------------------------------------------------
// Homology per q slice

/// Restriction of a complex to the generators of one quantum degree.
pub fn q_slice(c: &ChainComplex, q: i64) -> (ChainComplex, Vec<Vec<usize>>) {
    let idx: Vec<Vec<usize>> = c.groups.iter().map(|g| (0..g.len()).filter(|&i| g[i].q == q).collect()).collect();
    let groups = idx.iter().zip(&c.groups).map(|(ix, g)| ix.iter().map(|&i| g[i]).collect()).collect();
    let d = c.d.iter().enumerate().map(|(k, m)| m.submatrix(&idx[k + 1], &idx[k])).collect();
    (ChainComplex { h_min: c.h_min, groups, d, meta: c.meta.clone() }, idx)
}

pub fn q_degrees(c: &ChainComplex) -> Vec<i64> {
    let set: BTreeSet<i64> = c.groups.iter().flatten().map(|g| g.q).collect();
    set.into_iter().collect()
}

fn small_homology(c: &ChainComplex, q: i64, out: &mut BigradedGroup) -> Result<()> {
    let n = c.groups.len();
    let snfs: Vec<Vec<BigInt>> = c.d.iter().map(invariant_factors).collect();
    for k in 0..n {
        let rank_out = if k < c.d.len() { snfs[k].len() } else { 0 };
        let (rank_in, tors) = if k > 0 {
            let f = &snfs[k - 1];
            (f.len(), f.iter().filter(|x| !x.is_one()).cloned().collect::<Vec<_>>())
        } else {
            (0, Vec::new())
        };
        let free = c.groups[k].len() - rank_out - rank_in;
        out.add(c.h_min + k as i64, q, free, &tors)?;
    }
    Ok(())
}

pub fn homology(c: &ChainComplex) -> Result<BigradedGroup> {
    let parts: Vec<Result<BigradedGroup>> = q_degrees(c)
        .into_par_iter()
        .map(|q| {
            let (slice, _) = q_slice(c, q);
            let red = reduce(&slice, false)?;
            let mut g = BigradedGroup::default();
            small_homology(&red.complex, q, &mut g)?;
            Ok(g)
        })
        .collect();
    let mut total = BigradedGroup::default();
    for p in parts {
        total.entries.extend(p?.entries);
    }
    Ok(total)
}

/// Homology over the rationals of one slice, used as a cross-check (ranks only).
pub fn rational_ranks(c: &ChainComplex) -> Result<BTreeMap<(i64, i64), usize>> {
    let g = homology(c)?;
    Ok(g.entries.iter().filter(|(_, e)| e.free > 0).map(|(&k, e)| (k, e.free)).collect())
}

// ---------------------------------------------------------------------------
// Bases and induced maps

/// Generators of H in one bidegree with a coordinate functional for cycles.
#[derive(Clone, Debug)]
pub struct DegreeBasis {
    /// 0 for a free generator, d > 1 for a Z/d summand.
    pub orders: Vec<BigInt>,
    /// Representative cycles in the original complex (slice coordinates).
    pub reps: Vec<Vec<BigInt>>,
    /// Rows map a reduced cycle vector to homology coordinates.
    coord: Dense,
}

pub struct SliceBasis {
    pub q: i64,
    /// Original indices (inside the full complex) of the slice generators per degree.
    pub index: Vec<Vec<usize>>,
    pub reduced: Reduced,
    pub degrees: Vec<DegreeBasis>,
}

pub struct HomologyBasis {
    pub h_min: i64,
    pub slices: BTreeMap<i64, SliceBasis>,
}

fn sparse_apply(m: &SparseMat, v: &[BigInt]) -> Vec<BigInt> {
    let mut out = vec![BigInt::zero(); m.nrows];
    for (i, j, a) in m.triplets() {
        if !v[j].is_zero() {
            out[i] += &v[j] * a;
        }
    }
    out
}

fn degree_basis(red: &ChainComplex, k: usize) -> DegreeBasis {
    let n = red.groups[k].len();
    let b = if k < red.d.len() { dense_from_sparse(&red.d[k]) } else { vec![Vec::new(); 0] };
    let brows = if k < red.d.len() { red.d[k].nrows } else { 0 };
    let snf_b = smith_normal_form(&b, brows, n);
    let rb = snf_b.rank();
    // kernel of B = last n - rb columns of right
    let kdim = n - rb;
    let kernel_coords: Dense = snf_b.right_inv[rb..].to_vec();
    let a_coords: Dense = if k > 0 {
        let a = dense_from_sparse(&red.d[k - 1]);
        let ncols = red.d[k - 1].ncols;
        dense_mul(&kernel_coords, &a, n, ncols)
    } else {
        vec![Vec::new(); kdim]
    };
    let acols = if k > 0 { red.d[k - 1].ncols } else { 0 };
    let snf_a = smith_normal_form(&a_coords, kdim, acols);
    let mut orders = Vec::new();
    let mut reps = Vec::new();
    let mut coord = Vec::new();
    // kernel basis vectors in reduced coordinates: columns rb.. of right
    let kernel_vec = |c: &[BigInt]| -> Vec<BigInt> {
        (0..n)
            .map(|i| {
                let mut s = BigInt::zero();
                for (t, ct) in c.iter().enumerate() {
                    if !ct.is_zero() {
                        s += &snf_b.right[i][rb + t] * ct;
                    }
                }
                s
            })
            .collect()
    };
    let coord_all = dense_mul(&snf_a.left, &kernel_coords, kdim, n);
    for t in 0..kdim {
        let order = if t < snf_a.rank() { snf_a.diag[t].clone() } else { BigInt::zero() };
        if order.is_one() {
            continue;
        }
        let col: Vec<BigInt> = (0..kdim).map(|s| snf_a.left_inv[s][t].clone()).collect();
        reps.push(kernel_vec(&col));
        orders.push(order);
        coord.push(coord_all[t].clone());
    }
    DegreeBasis { orders, reps, coord }
}

impl DegreeBasis {
    pub fn rank(&self) -> usize {
        self.orders.len()
    }

    /// Coordinates of a reduced cycle; torsion coordinates reduced mod their order.
    pub fn coordinates(&self, v: &[BigInt]) -> Vec<BigInt> {
        self.coord
            .iter()
            .zip(&self.orders)
            .map(|(row, o)| {
                let mut s = BigInt::zero();
                for (a, b) in row.iter().zip(v) {
                    if !b.is_zero() {
                        s += a * b;
                    }
                }
                if o.is_zero() {
                    s
                } else {
                    s.mod_floor(o)
                }
            })
            .collect()
    }
}

pub fn homology_basis(c: &ChainComplex) -> Result<HomologyBasis> {
    let slices: Vec<Result<(i64, SliceBasis)>> = q_degrees(c)
        .into_par_iter()
        .map(|q| {
            let (slice, index) = q_slice(c, q);
            let reduced = reduce(&slice, true)?;
            let degrees = (0..reduced.complex.groups.len())
                .map(|k| {
                    let mut b = degree_basis(&reduced.complex, k);
                    let inc = &reduced.include[k];
                    b.reps = b.reps.iter().map(|r| sparse_apply(inc, r)).collect();
                    b
                })
                .collect();
            Ok((q, SliceBasis { q, index, reduced, degrees }))
        })
        .collect();
    let mut map = BTreeMap::new();
    for s in slices {
        let (q, b) = s?;
        map.insert(q, b);
    }
    Ok(HomologyBasis { h_min: c.h_min, slices: map })
}

impl HomologyBasis {
    pub fn group(&self) -> BigradedGroup {
        let mut g = BigradedGroup::default();
        for (&q, s) in &self.slices {
            for (k, d) in s.degrees.iter().enumerate() {
                let free = d.orders.iter().filter(|o| o.is_zero()).count();
                let tors: Vec<BigInt> = d.orders.iter().filter(|o| !o.is_zero()).cloned().collect();
                g.add(self.h_min + k as i64, q, free, &tors).expect("small torsion");
            }
        }
        g
    }

    pub fn degree(&self, h: i64, q: i64) -> Option<&DegreeBasis> {
        let s = self.slices.get(&q)?;
        let k = h - self.h_min;
        if k < 0 {
            return None;
        }
        s.degrees.get(k as usize)
    }

    /// Representative of basis element `t` at (h, q) as a vector over the full degree-h group.
    pub fn representative(&self, h: i64, q: i64, t: usize, full_len: usize) -> Vec<BigInt> {
        let s = &self.slices[&q];
        let k = (h - self.h_min) as usize;
        let mut v = vec![BigInt::zero(); full_len];
        for (p, &i) in s.index[k].iter().enumerate() {
            v[i] = s.degrees[k].reps[t][p].clone();
        }
        v
    }

    /// Homology coordinates of a cycle given over the full degree-h group.
    pub fn coordinates(&self, h: i64, q: i64, v: &[BigInt]) -> Vec<BigInt> {
        let Some(s) = self.slices.get(&q) else { return Vec::new() };
        let k = h - self.h_min;
        if k < 0 || k as usize >= s.degrees.len() {
            return Vec::new();
        }
        let k = k as usize;
        let local: Vec<BigInt> = s.index[k].iter().map(|&i| v[i].clone()).collect();
        let red = sparse_apply(&s.reduced.retract[k], &local);
        s.degrees[k].coordinates(&red)
    }
}

// ---------------------------------------------------------------------------
// Chain maps

/// A degree-preserving map of complexes, `maps[k]` from source degree `src.h_min + k`.
#[derive(Clone, Debug)]
pub struct ChainMap {
    pub source: ChainComplex,
    pub target: ChainComplex,
    pub maps: Vec<SparseMat>,
    pub q_shift: i64,
    pub h_shift: i64,
}

impl ChainMap {
    pub fn identity(c: &ChainComplex) -> ChainMap {
        let maps = c.groups.iter().map(|g| SparseMat::identity(g.len())).collect();
        ChainMap { source: c.clone(), target: c.clone(), maps, q_shift: 0, h_shift: 0 }
    }

    pub fn zero(source: &ChainComplex, target: &ChainComplex, q_shift: i64) -> ChainMap {
        let maps = source
            .groups
            .iter()
            .enumerate()
            .map(|(k, g)| SparseMat::zeros(target.group(source.h_min + k as i64).len(), g.len()))
            .collect();
        ChainMap { source: source.clone(), target: target.clone(), maps, q_shift, h_shift: 0 }
    }

    /// Matrix in source degree h.
    pub fn at(&self, h: i64) -> SparseMat {
        let k = h - self.source.h_min;
        if k >= 0 && (k as usize) < self.maps.len() {
            self.maps[k as usize].clone()
        } else {
            SparseMat::zeros(self.target.group(h + self.h_shift).len(), self.source.group(h).len())
        }
    }

    /// d F = F d in every degree, and every entry respects the q shift.
    pub fn is_chain_map(&self) -> bool {
        let lo = self.source.h_min.min(self.target.h_min) - 1;
        let hi = self.source.h_max().max(self.target.h_max()) + 1;
        for h in lo..=hi {
            let lhs = self.target.diff(h + self.h_shift).mul(&self.at(h));
            let rhs = self.at(h + 1).mul(&self.source.diff(h));
            if lhs != rhs {
                return false;
            }
        }
        self.respects_grading()
    }

    pub fn respects_grading(&self) -> bool {
        self.maps.iter().enumerate().all(|(k, m)| {
            let h = self.source.h_min + k as i64;
            let src = self.source.group(h);
            let tgt = self.target.group(h + self.h_shift);
            m.triplets().iter().all(|&(i, j, _)| tgt[i].q == src[j].q + self.q_shift)
        })
    }

    /// `other ∘ self`.
    pub fn then(&self, other: &ChainMap) -> ChainMap {
        let maps = (0..self.source.groups.len())
            .map(|k| {
                let h = self.source.h_min + k as i64;
                other.at(h + self.h_shift).mul(&self.at(h))
            })
            .collect();
        ChainMap {
            source: self.source.clone(),
            target: other.target.clone(),
            maps,
            q_shift: self.q_shift + other.q_shift,
            h_shift: self.h_shift + other.h_shift,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.maps.iter().all(|m| m.is_zero())
    }

    /// Whether self = s * identity for some sign s; returns that sign.
    pub fn identity_sign(&self) -> Option<i64> {
        if self.source.groups != self.target.groups || self.q_shift != 0 || self.h_shift != 0 {
            return None;
        }
        for s in [1, -1] {
            if self.maps.iter().all(|m| *m == SparseMat::identity(m.ncols).scale(s)) {
                return Some(s);
            }
        }
        None
    }

    /// Induced maps on homology per source bidegree: matrix rows = target basis.
    pub fn induced(&self, hs: &HomologyBasis, ht: &HomologyBasis) -> Vec<InducedMap> {
        let mut out = Vec::new();
        for (&q, slice) in &hs.slices {
            for (k, deg) in slice.degrees.iter().enumerate() {
                if deg.rank() == 0 {
                    continue;
                }
                let h = hs.h_min + k as i64;
                let f = self.at(h);
                let (th, tq) = (h + self.h_shift, q + self.q_shift);
                let tdeg = ht.degree(th, tq);
                let mut cols = Vec::new();
                for t in 0..deg.rank() {
                    let rep = hs.representative(h, q, t, self.source.group(h).len());
                    let img = sparse_apply(&f, &rep);
                    cols.push(ht.coordinates(th, tq, &img));
                }
                let trank = tdeg.map_or(0, |d| d.rank());
                let matrix: Vec<Vec<BigInt>> =
                    (0..trank).map(|r| cols.iter().map(|c| c[r].clone()).collect()).collect();
                out.push(InducedMap {
                    h,
                    q,
                    source_orders: deg.orders.clone(),
                    target_orders: tdeg.map_or(Vec::new(), |d| d.orders.clone()),
                    matrix,
                });
            }
        }
        // bidegrees with homology only in the target
        for (&q, slice) in &ht.slices {
            for (k, deg) in slice.degrees.iter().enumerate() {
                let th = ht.h_min + k as i64;
                let (h, sq) = (th - self.h_shift, q - self.q_shift);
                if deg.rank() == 0 || hs.degree(h, sq).is_some_and(|d| d.rank() > 0) {
                    continue;
                }
                out.push(InducedMap {
                    h,
                    q: sq,
                    source_orders: Vec::new(),
                    target_orders: deg.orders.clone(),
                    matrix: vec![Vec::new(); deg.rank()],
                });
            }
        }
        out.sort_by_key(|m| (m.h, m.q));
        out
    }

    /// Mapping cone with cone^h = source^{h+1} (+) target^h.
    pub fn cone(&self) -> ChainComplex {
        assert_eq!(self.h_shift, 0, "cone of a degree-preserving map");
        let lo = (self.source.h_min - 1).min(self.target.h_min);
        let hi = (self.source.h_max() - 1).max(self.target.h_max());
        let mut groups = Vec::new();
        for h in lo..=hi {
            let mut g: Vec<Generator> = self
                .source
                .group(h + 1)
                .iter()
                .map(|x| Generator { h, q: x.q + self.q_shift, ..*x })
                .collect();
            g.extend(self.target.group(h).iter().map(|x| Generator { h, ..*x }));
            groups.push(g);
        }
        let mut d = Vec::new();
        for h in lo..hi {
            let (s1, t0) = (self.source.group(h + 1).len(), self.target.group(h).len());
            let (s2, t1) = (self.source.group(h + 2).len(), self.target.group(h + 1).len());
            let mut trip = Vec::new();
            for (i, j, v) in self.source.diff(h + 1).triplets() {
                trip.push((i, j, -v));
            }
            for (i, j, v) in self.at(h + 1).triplets() {
                trip.push((s2 + i, j, v));
            }
            for (i, j, v) in self.target.diff(h).triplets() {
                trip.push((s2 + i, s1 + j, v));
            }
            d.push(SparseMat::from_triplets(s2 + t1, s1 + t0, trip));
        }
        ChainComplex { h_min: lo, groups, d, meta: self.target.meta.clone() }
    }

    /// Quasi-isomorphism over the integers: the mapping cone is acyclic.
    pub fn is_quasi_isomorphism(&self) -> Result<bool> {
        Ok(homology(&self.cone())?.is_zero())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct InducedMap {
    pub h: i64,
    pub q: i64,
    #[serde(serialize_with = "ser_bigs")]
    pub source_orders: Vec<BigInt>,
    #[serde(serialize_with = "ser_bigs")]
    pub target_orders: Vec<BigInt>,
    #[serde(serialize_with = "ser_dense")]
    pub matrix: Vec<Vec<BigInt>>,
}

fn ser_bigs<S: serde::Serializer>(v: &[BigInt], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| x.to_string()))
}

fn ser_dense<S: serde::Serializer>(v: &[Vec<BigInt>], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|r| r.iter().map(|x| x.to_string()).collect::<Vec<_>>()))
}

impl InducedMap {
    /// Whether the free part is a square unimodular matrix and torsion parts match.
    pub fn is_isomorphism(&self) -> bool {
        if self.source_orders != self.target_orders {
            return false;
        }
        let free_s: Vec<usize> = (0..self.source_orders.len()).filter(|&i| self.source_orders[i].is_zero()).collect();
        let free_t: Vec<usize> = (0..self.target_orders.len()).filter(|&i| self.target_orders[i].is_zero()).collect();
        if free_s.len() != free_t.len() {
            return false;
        }
        let m: Dense = free_t.iter().map(|&r| free_s.iter().map(|&c| self.matrix[r][c].clone()).collect()).collect();
        let snf = snf_impl(&m, free_t.len(), free_s.len(), false);
        snf.rank() == free_s.len() && snf.diag.iter().all(|d| d.is_one())
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().flatten().all(|x| x.is_zero())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::{build_diagram, parse_pd};
    use crate::differential::{totalize, SignRule};
    use proptest::prelude::*;

    fn big(m: &[&[i64]]) -> Dense {
        m.iter().map(|r| r.iter().map(|&x| BigInt::from(x)).collect()).collect()
    }

    fn check_snf(m: &Dense, rows: usize, cols: usize) -> Snf {
        let s = smith_normal_form(m, rows, cols);
        let lm = dense_mul(&s.left, m, rows, cols);
        let d = dense_mul(&lm, &s.right, cols, cols);
        for i in 0..rows {
            for j in 0..cols {
                let expect = if i == j && i < s.rank() { s.diag[i].clone() } else { BigInt::zero() };
                assert_eq!(d[i][j], expect);
            }
        }
        assert_eq!(dense_mul(&s.left, &s.left_inv, rows, rows), dense_identity(rows));
        assert_eq!(dense_mul(&s.right, &s.right_inv, cols, cols), dense_identity(cols));
        for w in s.diag.windows(2) {
            assert!((&w[1] % &w[0]).is_zero());
        }
        s
    }

    #[test]
    fn snf_examples() {
        assert_eq!(check_snf(&big(&[&[2]]), 1, 1).diag, vec![BigInt::from(2)]);
        assert_eq!(check_snf(&big(&[&[1, 1], &[1, 1]]), 2, 2).diag, vec![BigInt::from(1)]);
        let s = check_snf(&big(&[&[2, 4], &[6, 8]]), 2, 2);
        // gcd of entries is 2 and the product is |det| = 8
        assert_eq!(s.diag, vec![BigInt::from(2), BigInt::from(4)]);
    }

    fn det2(m: &[Vec<i64>]) -> i64 {
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    fn gcd(a: i64, b: i64) -> i64 {
        a.gcd(&b)
    }

    proptest! {
        #[test]
        fn snf_determinantal_divisors(a in -30i64..30, b in -30i64..30, c in -30i64..30, e in -30i64..30) {
            let m = vec![vec![a, b], vec![c, e]];
            let s = check_snf(&m.iter().map(|r| r.iter().map(|&x| BigInt::from(x)).collect()).collect(), 2, 2);
            let g = gcd(gcd(a, b), gcd(c, e));
            if g == 0 {
                prop_assert_eq!(s.rank(), 0);
            } else {
                prop_assert_eq!(s.diag[0].clone(), BigInt::from(g));
                let det = det2(&m).abs();
                if det != 0 {
                    prop_assert_eq!(s.diag[0].clone() * s.diag[1].clone(), BigInt::from(det));
                } else {
                    prop_assert_eq!(s.rank(), 1);
                }
            }
        }

        #[test]
        fn snf_random_rectangular(entries in proptest::collection::vec(-5i64..6, 12)) {
            let m: Dense = entries.chunks(4).map(|r| r.iter().map(|&x| BigInt::from(x)).collect()).collect();
            check_snf(&m, 3, 4);
        }
    }

    fn compute(code: &str) -> BigradedGroup {
        let d = build_diagram(&parse_pd(code).unwrap(), None).unwrap();
        homology(&totalize(&d, SignRule::Anchored).unwrap()).unwrap()
    }

    #[test]
    fn unknot_and_empty() {
        assert_eq!(poincare_string(&compute("PD[];O[cw]")), "q + q^-1");
        assert_eq!(poincare_string(&compute("PD[]")), "1");
    }

    #[test]
    fn positive_trefoil() {
        let g = compute("PD[X[1,5,2,4],X[3,1,4,6],X[5,3,6,2]]");
        assert_eq!(poincare_string(&g), "q^3 + q + t^2q^5 + t^3q^9 + t^3q^7(Z/2)");
        assert_eq!(g.total_torsion(), 1);
    }

    #[test]
    fn euler_characteristic_matches_chain_level() {
        let d = build_diagram(&parse_pd("PD[X[4,2,5,1],X[8,6,1,5],X[6,3,7,4],X[2,7,3,8]]").unwrap(), None).unwrap();
        let c = totalize(&d, SignRule::Anchored).unwrap();
        let mut chain = BTreeMap::new();
        for g in c.groups.iter().flatten() {
            *chain.entry(g.q).or_insert(0i64) += if g.h.rem_euclid(2) == 0 { 1 } else { -1 };
        }
        chain.retain(|_, v| *v != 0);
        assert_eq!(homology(&c).unwrap().euler(), chain);
    }

    #[test]
    fn reduction_maps_are_chain_maps() {
        let d = build_diagram(&parse_pd("PD[X[1,5,2,4],X[3,1,4,6],X[5,3,6,2]]").unwrap(), None).unwrap();
        let c = totalize(&d, SignRule::Anchored).unwrap();
        let red = reduce(&c, true).unwrap();
        let r = ChainMap {
            source: c.clone(),
            target: red.complex.clone(),
            maps: red.retract.clone(),
            q_shift: 0,
            h_shift: 0,
        };
        let i = ChainMap { source: red.complex.clone(), target: c.clone(), maps: red.include.clone(), q_shift: 0, h_shift: 0 };
        assert!(r.is_chain_map());
        assert!(i.is_chain_map());
        assert_eq!(i.then(&r).identity_sign(), Some(1));
        assert!(r.is_quasi_isomorphism().unwrap());
    }

    #[test]
    fn identity_induces_identity() {
        let d = build_diagram(&parse_pd("PD[X[1,5,2,4],X[3,1,4,6],X[5,3,6,2]]").unwrap(), None).unwrap();
        let c = totalize(&d, SignRule::Anchored).unwrap();
        let hb = homology_basis(&c).unwrap();
        assert_eq!(hb.group(), homology(&c).unwrap());
        for m in ChainMap::identity(&c).induced(&hb, &hb) {
            assert!(m.is_isomorphism());
            for (r, row) in m.matrix.iter().enumerate() {
                for (col, v) in row.iter().enumerate() {
                    assert_eq!(*v, BigInt::from((r == col) as i64));
                }
            }
        }
    }

    #[test]
    fn poincare_formatting() {
        let mut g = BigradedGroup::default();
        g.add(0, 0, 2, &[]).unwrap();
        g.add(-1, 3, 0, &[BigInt::from(2), BigInt::from(2)]).unwrap();
        g.add(1, 1, 1, &[BigInt::from(6)]).unwrap();
        assert_eq!(poincare_string(&g), "t^-1q^3(Z/2)^2 + 2 + tq + tq(Z/2) + tq(Z/3)");
        assert_eq!(poincare_string(&BigradedGroup::default()), "0");
    }
}
