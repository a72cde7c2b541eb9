//! Bundled diagrams: prime knots and links up to eight crossings, the nine and
//! ten crossing knots, reference homology tables and synthetic fixtures.

use std::collections::BTreeMap;

use crate::diagram::{parse_pd, PdCode};

const KNOTS: &str = include_str!("../data/knots.txt");
const KNOTS_9_10: &str = include_str!("../data/knots_9_10.txt");
const LINKS: &str = include_str!("../data/links.txt");
const KNOTS_KH: &str = include_str!("../data/knots_kh.txt");
const LINKS_KH: &str = include_str!("../data/links_kh.txt");

#[derive(Clone, Debug)]
pub struct Entry {
    pub name: String,
    pub pd: PdCode,
}

/// One reference homology entry: (h, q, free rank, torsion orders).
pub type KhRow = (i64, i64, usize, Vec<u64>);

fn parse_table(text: &str) -> Vec<Entry> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (name, code) = l.split_once('\t').expect("name<TAB>code");
            Entry { name: name.to_string(), pd: parse_pd(code).expect("bundled code parses") }
        })
        .collect()
}

fn parse_kh(text: &str) -> BTreeMap<String, Vec<KhRow>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (name, rows) = l.split_once('\t').expect("name<TAB>rows");
            let rows = rows
                .split(';')
                .filter(|r| !r.is_empty())
                .map(|r| {
                    let f: Vec<&str> = r.split(':').collect();
                    let torsion = f[3].split(',').filter(|t| !t.is_empty()).map(|t| t.parse().unwrap()).collect();
                    (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap(), torsion)
                })
                .collect();
            (name.to_string(), rows)
        })
        .collect()
}

pub fn knots() -> Vec<Entry> {
    parse_table(KNOTS)
}

pub fn links() -> Vec<Entry> {
    parse_table(LINKS)
}

pub fn knots_9_10() -> Vec<Entry> {
    parse_table(KNOTS_9_10)
}

/// Integral homology of knots (torsion included).
pub fn knot_homology() -> BTreeMap<String, Vec<KhRow>> {
    parse_kh(KNOTS_KH)
}

/// Rational ranks of links; torsion columns are empty.
pub fn link_ranks() -> BTreeMap<String, Vec<KhRow>> {
    parse_kh(LINKS_KH)
}

pub fn lookup(name: &str) -> Option<PdCode> {
    knots().into_iter().chain(links()).chain(knots_9_10()).chain(synthetic()).find(|e| e.name == name).map(|e| e.pd)
}

/// Crossing change at every crossing: the tuple is restarted at the incoming over-strand.
pub fn mirror(pd: &PdCode) -> PdCode {
    let d = crate::diagram::build_diagram(pd, None).expect("valid code");
    let crossings = d
        .crossings
        .iter()
        .map(|x| {
            let start = if x.sign > 0 { 3 } else { 1 };
            [0, 1, 2, 3].map(|k| x.arcs[(start + k) % 4])
        })
        .collect();
    PdCode::new(crossings, pd.unknots.clone(), None).expect("mirror is valid")
}

/// Small diagrams exercising kinks, bigons, split unions and mirrored cubes.
pub fn synthetic() -> Vec<Entry> {
    let mut out = Vec::new();
    let mut push = |name: &str, code: &str| {
        out.push(Entry { name: name.to_string(), pd: parse_pd(code).expect("synthetic code parses") })
    };
    push("unknot", "PD[];O[cw]");
    push("kink+", "PD[X[1,1,2,2]]");
    push("kink-", "PD[X[1,2,2,1]]");
    push("unlink2", "PD[];O[cw];O[ccw]");
    push("trefoil+unknot", "PD[X[1,5,2,4],X[3,1,4,6],X[5,3,6,2]];O[ccw]");
    push("double-kink", "PD[X[1,1,2,3],X[2,4,4,3]]");
    for e in knots().into_iter().filter(|e| e.pd.crossings.len() <= 6) {
        out.push(Entry { name: format!("{}-mirror", e.name), pd: mirror(&e.pd) });
    }
    out
}

/// The bundled acceptance corpus: everything up to eight crossings.
pub fn corpus() -> Vec<Entry> {
    let mut all = synthetic();
    all.extend(knots());
    all.extend(links());
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::build_diagram;

    #[test]
    fn tables_parse() {
        assert_eq!(knots().len(), 35);
        assert_eq!(links().len(), 47);
        assert!(knots_9_10().iter().any(|e| e.name == "10_1"));
        assert_eq!(knot_homology()["3_1"].len(), 5);
    }

    #[test]
    fn mirror_flips_signs() {
        for e in knots().iter().take(5) {
            let a = build_diagram(&e.pd, None).unwrap();
            let b = build_diagram(&mirror(&e.pd), None).unwrap();
            assert_eq!((a.n_plus, a.n_minus), (b.n_minus, b.n_plus));
        }
    }

    #[test]
    fn synthetic_codes_are_valid() {
        for e in synthetic() {
            build_diagram(&e.pd, None).unwrap();
        }
    }
}
