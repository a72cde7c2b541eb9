//! Standard generators: labelings of the circles of a resolution by One or X.

use serde::Serialize;
use serde_json::{json, Value};

use crate::cube::{hdeg, qshift, Resolution, Vertex};
use crate::diagram::Diagram;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Label {
    One,
    X,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Generator {
    pub vertex: Vertex,
    /// Bit j set means circle j carries X.
    pub labels: u64,
    pub n_circles: u8,
    pub h: i64,
    pub q: i64,
}

impl Generator {
    pub fn label(&self, j: usize) -> Label {
        if self.labels >> j & 1 == 1 {
            Label::X
        } else {
            Label::One
        }
    }

    pub fn n_x(&self) -> i64 {
        self.labels.count_ones() as i64
    }

    /// Position within its vertex: lexicographic in circle order with One < X.
    pub fn index(&self) -> usize {
        labels_to_index(self.labels, self.n_circles as usize)
    }

    pub fn to_json(&self, n: usize) -> Value {
        let bits: Vec<u8> = (0..n).map(|i| (self.vertex >> i & 1) as u8).collect();
        let labels: serde_json::Map<String, Value> = (0..self.n_circles as usize)
            .map(|j| {
                let l = match self.label(j) {
                    Label::One => "1",
                    Label::X => "X",
                };
                (format!("c{j}"), Value::from(l))
            })
            .collect();
        json!({"vertex": bits, "labels": labels, "h": self.h, "q": self.q})
    }
}

pub fn labels_to_index(labels: u64, k: usize) -> usize {
    let mut idx = 0usize;
    for j in 0..k {
        idx = idx << 1 | (labels >> j & 1) as usize;
    }
    idx
}

pub fn index_to_labels(idx: usize, k: usize) -> u64 {
    let mut labels = 0u64;
    for j in 0..k {
        labels |= ((idx >> (k - 1 - j)) as u64 & 1) << j;
    }
    labels
}

/// Quantum degree: (#One - #X) - qshift. Merges and splits then lower it by
/// exactly the change in the shift, so edge maps preserve it.
pub fn generator_qdeg(labels: u64, n_circles: usize, d: &Diagram, u: Vertex) -> i64 {
    let x = labels.count_ones() as i64;
    (n_circles as i64 - 2 * x) - qshift(d, u)
}

pub fn enumerate_generators(d: &Diagram, r: &Resolution) -> Vec<Generator> {
    let k = r.n_circles();
    assert!(k < 64, "too many circles");
    let h = hdeg(d, r.vertex);
    (0..1usize << k)
        .map(|idx| {
            let labels = index_to_labels(idx, k);
            Generator {
                vertex: r.vertex,
                labels,
                n_circles: k as u8,
                h,
                q: generator_qdeg(labels, k, d, r.vertex),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::resolve;
    use crate::diagram::{build_diagram, parse_pd};
    use proptest::prelude::*;

    fn diagram(code: &str) -> Diagram {
        build_diagram(&parse_pd(code).unwrap(), None).unwrap()
    }

    #[test]
    fn unknot_generators() {
        let d = diagram("PD[];O[cw]");
        let gens = enumerate_generators(&d, &resolve(&d, 0));
        assert_eq!(gens.len(), 2);
        assert_eq!((gens[0].label(0), gens[0].q), (Label::One, 1));
        assert_eq!((gens[1].label(0), gens[1].q), (Label::X, -1));
    }

    #[test]
    fn empty_resolution_has_one_generator() {
        let d = diagram("PD[]");
        let gens = enumerate_generators(&d, &resolve(&d, 0));
        assert_eq!(gens.len(), 1);
        assert_eq!(gens[0].q, 0);
    }

    #[test]
    fn two_circles_four_generators() {
        let d = diagram("PD[];O[cw];O[ccw]");
        let gens = enumerate_generators(&d, &resolve(&d, 0));
        assert_eq!(gens.len(), 4);
        let order: Vec<(Label, Label)> = gens.iter().map(|g| (g.label(0), g.label(1))).collect();
        assert_eq!(
            order,
            vec![(Label::One, Label::One), (Label::One, Label::X), (Label::X, Label::One), (Label::X, Label::X)]
        );
    }

    #[test]
    fn positive_kink_one_label_grading() {
        // a positive kink's oriented resolution has two circles, shift -1
        let d = diagram("PD[X[1,1,2,2]]");
        assert_eq!(d.n_plus, 1);
        let r = resolve(&d, 0);
        assert_eq!(r.n_circles(), 2);
        let gens = enumerate_generators(&d, &r);
        assert_eq!(gens[0].q, 3);
        assert_eq!(gens[3].q, -1);
    }

    #[test]
    fn graded_rank_is_binomial() {
        let d = diagram("PD[X[1,4,2,5],X[3,6,4,1],X[5,2,6,3]]");
        for u in 0..8 {
            let r = resolve(&d, u);
            let k = r.n_circles();
            let gens = enumerate_generators(&d, &r);
            for x in 0..=k {
                let q = (k as i64 - 2 * x as i64) - qshift(&d, u);
                let count = gens.iter().filter(|g| g.q == q).count();
                let binom = (0..x).fold(1usize, |acc, i| acc * (k - i) / (i + 1));
                assert_eq!(count, binom);
            }
        }
    }

    proptest! {
        #[test]
        fn index_roundtrip(k in 0usize..12, seed in any::<u64>()) {
            let idx = (seed as usize) & ((1usize << k) - 1);
            prop_assert_eq!(labels_to_index(index_to_labels(idx, k), k), idx);
        }
    }
}
