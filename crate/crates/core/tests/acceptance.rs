//! Acceptance suite. One line per criterion; exits nonzero if any fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use rayon::prelude::*;

use foamkh::burnside::{build_functor, functor_json, solve_diagonal_phi, verify_hexagons};
use foamkh::corpus::{self, Entry};
use foamkh::cube::Direction;
use foamkh::diagram::{build_diagram, parse_pd, PdCode};
use foamkh::differential::{totalize, verify_complex, CubeComplex, SignRule};
use foamkh::homology::{homology, homology_basis, ChainMap};
use foamkh::moves::{evaluate_movie, r1_site, r2_site, r3_site, reidemeister_retract, Movie, MoveSite};
use foamkh::sparse::SparseMat;

const UNKNOT_SECS: f64 = 0.1;
const TREFOIL_SECS: f64 = 1.0;
const TEN_CROSSING_SECS: f64 = 60.0;
const SITES_PER_MOVE: usize = 3;
const TREFOIL_TORSION: usize = 1;

const TREFOIL: &str = "PD[X[1,4,2,5],X[3,6,4,1],X[5,2,6,3]]";

type Verdict = (bool, String);

fn cc(pd: &PdCode) -> CubeComplex {
    CubeComplex::build(build_diagram(pd, None).expect("corpus diagram"), SignRule::Anchored).expect("cube builds")
}

fn failures<T: Send, F: Fn(&Entry) -> Option<T> + Sync + Send>(entries: &[Entry], f: F) -> Vec<(String, T)> {
    let mut out: Vec<(String, T)> =
        entries.par_iter().filter_map(|e| f(e).map(|t| (e.name.clone(), t))).collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

fn names<T>(v: &[(String, T)]) -> String {
    let n: Vec<&str> = v.iter().take(8).map(|x| x.0.as_str()).collect();
    n.join(", ")
}

fn unknot() -> Verdict {
    let t = Instant::now();
    let pd = parse_pd("PD[];O[cw]").unwrap();
    let g = homology(&totalize(&build_diagram(&pd, None).unwrap(), SignRule::Anchored).unwrap()).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let rows = g.rows();
    let ok = rows == vec![(0, -1, 1, vec![]), (0, 1, 1, vec![])] && secs < UNKNOT_SECS;
    (ok, format!("groups {rows:?} in {secs:.4} s"))
}

fn anchors(entries: &[Entry]) -> Verdict {
    let counted: Vec<(usize, Vec<String>)> = entries
        .par_iter()
        .map(|e| {
            let c = cc(&e.pd);
            let mut n = 0;
            let mut bad = Vec::new();
            for edge in &c.edges {
                let allowed = match (edge.desc.direction, edge.desc.is_split()) {
                    (Direction::Unzip, true) => edge.desc.site_flow,
                    (Direction::Zip, false) => 1,
                    _ => continue,
                };
                n += 1;
                if edge.entries().any(|v| v != 0 && v != allowed) {
                    bad.push(format!("{} edge {}+{}", e.name, edge.src, edge.crossing));
                }
            }
            (n, bad)
        })
        .collect();
    let checked: usize = counted.iter().map(|c| c.0).sum();
    let bad: Vec<String> = counted.into_iter().flat_map(|c| c.1).collect();
    let report_ok = failures(entries, |e| (!verify_complex(&cc(&e.pd)).anchors.ok()).then_some(()));
    let ok = bad.is_empty() && report_ok.is_empty() && checked > 0;
    (ok, format!("{checked} anchor edges, {} violations, report failures [{}]", bad.len(), names(&report_ok)))
}

fn sign_coherence(entries: &[Entry]) -> Verdict {
    let per: Vec<(usize, usize)> = entries
        .par_iter()
        .map(|e| {
            let c = cc(&e.pd);
            let bad = c
                .edges
                .iter()
                .filter(|edge| {
                    let v: Vec<i8> = edge.entries().filter(|&x| x != 0).collect();
                    !(v.iter().all(|&x| x == 1) || v.iter().all(|&x| x == -1))
                })
                .count();
            (c.edges.len(), bad)
        })
        .collect();
    let total: usize = per.iter().map(|p| p.0).sum();
    let bad: usize = per.iter().map(|p| p.1).sum();
    (bad == 0 && total > 0, format!("{} of {total} edges coherent", total - bad))
}

/// Composite of two edge maps around a face, before cube signs.
fn face_paths(c: &CubeComplex, u: u64, i: usize, j: usize) -> (SparseMat, SparseMat) {
    let e = |v: u64, k: usize| c.edge(v, k).to_sparse();
    (e(u | 1 << i, j).mul(&e(u, i)), e(u | 1 << j, i).mul(&e(u, j)))
}

fn commutation(entries: &[Entry], ten: &[Entry]) -> Verdict {
    let per: Vec<(String, usize, usize, bool, bool)> = entries
        .par_iter()
        .map(|e| {
            let c = cc(&e.pd);
            let faces = c.cube.faces();
            let bad = faces
                .iter()
                .filter(|&&(u, i, j)| {
                    let (a, b) = face_paths(&c, u, i, j);
                    a != b
                })
                .count();
            let r = verify_complex(&c);
            (e.name.clone(), faces.len(), bad, c.complex.d_squared_zero(), r.face_commutation.ok() && r.d_squared.ok())
        })
        .collect();
    let faces: usize = per.iter().map(|p| p.1).sum();
    let bad: Vec<&str> = per.iter().filter(|p| p.2 > 0 || !p.3 || !p.4).map(|p| p.0.as_str()).collect();

    let t = Instant::now();
    let tre = cc(&parse_pd(TREFOIL).unwrap());
    let tre_ok = verify_complex(&tre).ok() && homology(&tre.complex).is_ok();
    let tre_secs = t.elapsed().as_secs_f64();

    let mut worst = (0.0f64, String::new());
    let mut ten_ok = true;
    for e in ten {
        let t = Instant::now();
        let c = cc(&e.pd);
        let r = verify_complex(&c);
        ten_ok &= r.face_commutation.ok() && r.d_squared.ok() && homology(&c.complex).is_ok();
        let s = t.elapsed().as_secs_f64();
        if s > worst.0 {
            worst = (s, e.name.clone());
        }
    }
    let ok = bad.is_empty() && faces > 0 && tre_ok && tre_secs < TREFOIL_SECS && ten_ok && worst.0 < TEN_CROSSING_SECS;
    (
        ok,
        format!(
            "{faces} faces, failing diagrams [{}]; trefoil {tre_secs:.3} s; {} ten-crossing knots, slowest {} {:.2} s",
            bad.join(", "),
            ten.len(),
            worst.1,
            worst.0
        ),
    )
}

fn hexagons(entries: &[Entry]) -> Verdict {
    let per: Vec<(String, usize, usize, bool)> = entries
        .par_iter()
        .map(|e| {
            let c = cc(&e.pd);
            let f = build_functor(&c);
            let r = verify_hexagons(&f);
            (e.name.clone(), r.hexagons.checked, r.ladybug_faces, r.ok())
        })
        .collect();
    let cubes: usize = per.iter().map(|p| p.1).sum();
    let ladybugs: usize = per.iter().map(|p| p.2).sum();
    let bad: Vec<&str> = per.iter().filter(|p| !p.3).map(|p| p.0.as_str()).collect();
    (
        bad.is_empty() && cubes > 0 && ladybugs > 0,
        format!("{cubes} 3-subcubes, {ladybugs} ladybug faces, failing [{}]", bad.join(", ")),
    )
}

fn diagonal(entries: &[Entry]) -> Verdict {
    let bad = failures(entries, |e| {
        let d = build_diagram(&e.pd, None).unwrap();
        let plain = totalize(&d, SignRule::Plain).unwrap();
        let c = cc(&e.pd);
        let conj_ok = match solve_diagonal_phi(&c.complex, &plain) {
            Ok(phi) => phi.conjugate(&c.complex).d == plain.d,
            Err(_) => false,
        };
        let same = homology(&c.complex).unwrap() == homology(&plain).unwrap();
        (!(conj_ok && same)).then_some(())
    });
    let tre = cc(&parse_pd(TREFOIL).unwrap());
    let torsion = homology(&tre.complex).unwrap().total_torsion();
    (
        bad.is_empty() && torsion == TREFOIL_TORSION,
        format!("{} diagrams, failing [{}]; trefoil torsion summands {torsion}", entries.len(), names(&bad)),
    )
}

fn isomorphism(f: &ChainMap) -> bool {
    let (Ok(hs), Ok(ht)) = (homology_basis(&f.source), homology_basis(&f.target)) else { return false };
    f.induced(&hs, &ht).iter().all(|m| m.is_isomorphism())
}

fn check_site(site: &MoveSite) -> bool {
    let Ok(r) = reidemeister_retract(site, SignRule::Anchored) else { return false };
    let big = homology(&r.retraction.source).unwrap();
    let small = homology(&r.retraction.target).unwrap();
    r.retraction.is_chain_map() && r.inclusion.is_chain_map() && isomorphism(&r.retraction) && big == small
}

fn reidemeister() -> Verdict {
    let mut sources: Vec<Entry> = corpus::knots().into_iter().filter(|e| e.pd.crossings.len() <= 5).collect();
    sources.extend(corpus::links().into_iter().filter(|e| e.pd.crossings.len() <= 6));
    let mut out = Vec::new();
    let mut all = true;

    let mut kinds: Vec<(&str, Vec<(String, MoveSite)>)> = Vec::new();
    for (label, sign) in [("R1+", 1i8), ("R1-", -1)] {
        let sites = sources
            .iter()
            .take(SITES_PER_MOVE)
            .enumerate()
            .filter_map(|(k, e)| r1_site(&e.pd, k + 1, sign, k % 2 == 0).ok().map(|s| (e.name.clone(), s)))
            .collect();
        kinds.push((label, sites));
    }
    let mut r2 = Vec::new();
    'outer: for e in &sources {
        let n = 2 * e.pd.crossings.len();
        for a in 1..=n {
            for b in 1..=n {
                if let Ok(s) = r2_site(&e.pd, a, b, None) {
                    r2.push((e.name.clone(), s));
                    if r2.len() == SITES_PER_MOVE {
                        break 'outer;
                    }
                    continue 'outer;
                }
            }
        }
    }
    kinds.push(("R2", r2));
    let mut r3 = Vec::new();
    let mut wide = corpus::corpus();
    wide.extend(corpus::knots_9_10());
    'outer3: for e in &wide {
        let faces = build_diagram(&e.pd, None).unwrap().n_base_regions();
        for f in 0..faces {
            if let Ok(s) = r3_site(&e.pd, f) {
                r3.push((format!("{} face {f}", e.name), s));
                if r3.len() == SITES_PER_MOVE {
                    break 'outer3;
                }
                continue 'outer3;
            }
        }
    }
    kinds.push(("R3", r3));

    for (label, sites) in kinds {
        let good: Vec<bool> = sites.par_iter().map(|(_, s)| check_site(s)).collect();
        let n_ok = good.iter().filter(|&&g| g).count();
        all &= sites.len() == SITES_PER_MOVE && n_ok == SITES_PER_MOVE;
        let at: Vec<&str> = sites.iter().map(|s| s.0.as_str()).collect();
        out.push(format!("{label} {n_ok}/{SITES_PER_MOVE} ({})", at.join("; ")));
    }
    (all, out.join(", "))
}

fn movie(script: &str) -> Option<foamkh::moves::MovieResult> {
    evaluate_movie(&Movie::parse(script).ok()?, SignRule::Anchored).ok()
}

fn movies() -> Verdict {
    let bases = ["PD[]", "PD[];O[cw]", "PD[X[1,5,2,4],X[3,1,4,6],X[5,3,6,2]]", "PD[X[1,3,2,4],X[3,1,4,2]]"];
    let mut notes = Vec::new();
    let mut ok = true;

    let mut zero = 0;
    for b in bases {
        let comp = parse_pd(b).unwrap().component_count();
        match movie(&format!("{b}\nbirth\ndeath comp={comp}\n")) {
            Some(r) if r.composite.is_zero() => zero += 1,
            _ => ok = false,
        }
    }
    notes.push(format!("[Birth,Death]=0 on {zero}/{}", bases.len()));

    let mut ident = 0;
    let mut signs = Vec::new();
    for b in &bases[1..] {
        let pd = parse_pd(b).unwrap();
        let arcs = 2 * pd.crossings.len() + pd.unknots.len();
        let faces = build_diagram(&pd, None).unwrap().n_base_regions().max(1);
        let found = (0..faces).flat_map(|f| ["cw", "ccw"].map(|r| (f, r))).find_map(|(f, r)| {
            movie(&format!("{b}\nbirth face={f} rot={r}\nsaddle arcs=1,{}\n", arcs + 1))
        });
        match found.and_then(|r| r.composite.identity_sign()) {
            Some(s) => {
                ident += 1;
                signs.push(s);
            }
            None => ok = false,
        }
    }
    notes.push(format!("[Birth,Saddle]=±id on {ident}/{} (signs {signs:?})", bases.len() - 1));

    let scripts = [
        "PD[X[1,5,2,4],X[3,1,4,6],X[5,3,6,2]]\nr1+ arc=2\nr1-remove crossing=3\nr2 arcs=1,4\nr2-remove face=3\n",
        "PD[X[1,3,2,4],X[3,1,4,2]]\nbirth face=0\nsaddle arcs=1,5\nr1- arc=2 side=right\n",
        "PD[];O[cw];O[cw]\nsaddle arcs=1,2\nbirth\ndeath comp=1\n",
    ];
    let mut maps = 0;
    let mut bad_maps = 0;
    for s in scripts {
        match movie(s) {
            Some(r) => {
                for st in &r.steps {
                    maps += 1;
                    bad_maps += usize::from(!st.map.is_chain_map());
                }
                bad_maps += usize::from(!r.composite.is_chain_map());
            }
            None => {
                ok = false;
                notes.push(format!("script failed: {:?}", s.lines().next().unwrap_or("")));
            }
        }
    }
    ok &= bad_maps == 0 && zero == bases.len() && ident == bases.len() - 1;
    notes.push(format!("{maps} step maps, {bad_maps} not chain maps"));
    (ok, notes.join(", "))
}

fn reports(code: &str) -> Vec<String> {
    let pd = parse_pd(code).unwrap();
    let c = cc(&pd);
    let n = c.cube.n();
    vec![
        c.complex.to_json(n).to_string(),
        serde_json::to_string(&verify_complex(&c)).unwrap(),
        functor_json(&build_functor(&c)).unwrap().to_string(),
        homology(&c.complex).unwrap().to_json().to_string(),
    ]
}

fn determinism() -> Verdict {
    let codes = [TREFOIL, "PD[X[4,2,5,1],X[8,6,1,5],X[6,3,7,4],X[2,7,3,8]]", "PD[X[1,3,2,4],X[3,1,4,2]];O[ccw]"];
    let script = "PD[X[1,5,2,4],X[3,1,4,6],X[5,3,6,2]]\nr1+ arc=2\nbirth face=0 rot=cw\nsaddle arcs=1,9\n";
    let run = |threads: usize| -> Vec<String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut v: Vec<String> = codes.iter().flat_map(|c| reports(c)).collect();
            v.push(movie(script).map(|r| r.to_json().to_string()).unwrap_or_default());
            v
        })
    };
    let a = run(1);
    let b = run(4);
    let c = run(4);
    let same = a == b && b == c;
    let nonempty = a.iter().all(|s| !s.is_empty());
    let bytes: usize = a.iter().map(|s| s.len()).sum();
    (same && nonempty, format!("{} reports, {bytes} bytes, identical across 3 runs: {same}", a.len()))
}

fn main() -> ExitCode {
    let entries = corpus::corpus();
    let ten: Vec<Entry> = corpus::knots_9_10().into_iter().filter(|e| e.pd.crossings.len() == 10).collect();
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict>)> = vec![
        ("unknot homology", Box::new(unknot)),
        ("theta anchors", Box::new(|| anchors(&entries))),
        ("sign coherence", Box::new(|| sign_coherence(&entries))),
        ("face commutation and d^2", Box::new(|| commutation(&entries, &ten))),
        ("hexagons and inverses", Box::new(|| hexagons(&entries))),
        ("diagonal comparison", Box::new(|| diagonal(&entries))),
        ("reidemeister invariance", Box::new(reidemeister)),
        ("movie properties", Box::new(movies)),
        ("determinism", Box::new(determinism)),
    ];
    let mut summary = BTreeMap::new();
    for (k, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (ok, detail) = f();
        println!(
            "{} {} {name}: {detail} [{:.2} s]",
            if ok { "PASS" } else { "FAIL" },
            k + 1,
            t.elapsed().as_secs_f64()
        );
        summary.insert(k + 1, ok);
    }
    let failed = summary.values().filter(|&&ok| !ok).count();
    println!("{} of {} criteria passed", summary.len() - failed, summary.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
