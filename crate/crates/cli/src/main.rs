use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use foamkh::burnside::{build_functor, burnside_report, functor_json, BurnsideReport};
use foamkh::corpus;
use foamkh::diagram::{build_diagram, parse_pd, Diagram, PdCode};
use foamkh::differential::{totalize, verify_complex, Check, ComplexReport, CubeComplex, SignRule, Status};
use foamkh::homology::{homology, poincare_string, InducedMap};
use foamkh::moves::{evaluate_movie, Movie, MovieResult};
use foamkh::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "foamkh", version, about = "Oriented gl(2) foam Khovanov homology over the integers")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    format: Format,

    /// Face index used as the unbounded region.
    #[arg(long, global = true)]
    outer_face: Option<usize>,

    /// Worker threads (defaults to one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Verification level; `verify` defaults to full, everything else to fast.
    #[arg(long, value_enum, global = true)]
    level: Option<Level>,

    /// Edge sign rule.
    #[arg(long, value_enum, default_value_t = Rule::Anchored, global = true)]
    sign_rule: Rule,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bigraded homology and Poincare polynomial.
    Compute {
        /// Inline PD code, a file holding one, or a bundled diagram name.
        input: String,
    },
    /// Property report: sign coherence, face commutation, d^2, anchors, hexagons, phi.
    Verify {
        input: String,
        /// Negate the k-th edge map before checking (fault injection).
        #[arg(long)]
        flip_edge: Option<usize>,
    },
    /// Diagonal comparison with the plain Khovanov complex.
    Compare { input: String },
    /// Evaluate a movie script.
    Movie { script: PathBuf },
    /// Dump the signed Burnside functor as JSON.
    BurnsideDump { input: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Level {
    Fast,
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Rule {
    Anchored,
    SiteFlow,
    Plain,
    Gauge,
}

impl From<Rule> for SignRule {
    fn from(r: Rule) -> SignRule {
        match r {
            Rule::Anchored => SignRule::Anchored,
            Rule::SiteFlow => SignRule::SiteFlow,
            Rule::Plain => SignRule::Plain,
            Rule::Gauge => SignRule::Gauge,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(out) => {
            print!("{}", out.text);
            ExitCode::from(out.code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

struct Output {
    text: String,
    code: u8,
}

impl Output {
    fn new(text: String, ok: bool) -> Output {
        Output { text, code: if ok { 0 } else { 2 } }
    }
}

fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values serialize");
    s.push('\n');
    s
}

fn read_input(input: &str) -> Result<PdCode> {
    let t = input.trim();
    if t.starts_with("PD") || t.starts_with('{') {
        return parse_pd(t);
    }
    let path = Path::new(t);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Invalid(format!("{t}: {e}")))?;
        return parse_pd(&text);
    }
    corpus::lookup(t).ok_or_else(|| Error::Invalid(format!("{t:?} is neither a PD code, a file nor a bundled diagram")))
}

fn diagram(cli: &Cli, input: &str) -> Result<Diagram> {
    build_diagram(&read_input(input)?, cli.outer_face)
}

fn run(cli: &Cli) -> Result<Output> {
    let rule = SignRule::from(cli.sign_rule);
    match &cli.command {
        Command::Compute { input } => compute(cli, diagram(cli, input)?, rule),
        Command::Verify { input, flip_edge } => verify(cli, diagram(cli, input)?, rule, *flip_edge),
        Command::Compare { input } => compare(cli, diagram(cli, input)?, rule),
        Command::Movie { script } => movie(cli, script, rule),
        Command::BurnsideDump { input } => {
            if cli.format == Format::Csv {
                return Err(Error::Invalid("burnside-dump has no csv form".into()));
            }
            let cc = CubeComplex::build(diagram(cli, input)?, rule)?;
            let v = functor_json(&build_functor(&cc))?;
            Ok(Output::new(json_text(&v), true))
        }
    }
}

fn compute(cli: &Cli, d: Diagram, rule: SignRule) -> Result<Output> {
    let header = json!({
        "hash": d.hash(),
        "crossings": d.n_crossings(),
        "n_plus": d.n_plus,
        "n_minus": d.n_minus,
        "sign_rule": rule,
    });
    let c = if cli.level == Some(Level::Full) {
        let cc = CubeComplex::build(d, rule)?;
        let report = verify_complex(&cc);
        if !report.ok() {
            return Err(Error::Verification(first_failure(&report)));
        }
        cc.complex
    } else {
        totalize(&d, rule)?
    };
    if !c.d_squared_zero() {
        return Err(Error::Verification("d^2 != 0".into()));
    }
    let g = homology(&c)?;
    let text = match cli.format {
        Format::Text => format!("{}\n", poincare_string(&g)),
        Format::Csv => g.to_csv(),
        Format::Json => {
            json_text(&json!({"diagram": header, "poincare": poincare_string(&g), "homology": g.to_json()}))
        }
    };
    Ok(Output::new(text, true))
}

fn checks(r: &ComplexReport) -> Vec<(&'static str, &Check)> {
    vec![
        ("C1 sign-coherence", &r.sign_coherence),
        ("C2 face-commutation", &r.face_commutation),
        ("C3 d-squared", &r.d_squared),
        ("C4 anchors", &r.anchors),
        ("no-cancellation", &r.no_cancellation),
    ]
}

fn burnside_checks(b: &BurnsideReport) -> Vec<(&'static str, &Check)> {
    vec![
        ("face-bijections", &b.hexagon.faces),
        ("inverse-condition", &b.hexagon.inverse_condition),
        ("hexagons", &b.hexagon.hexagons),
        ("phi", &b.phi),
    ]
}

fn first_failure(r: &ComplexReport) -> String {
    checks(r)
        .into_iter()
        .find(|(_, c)| c.status == Status::Fail)
        .map(|(name, c)| format!("{name}: {}", c.failures.first().cloned().unwrap_or_default()))
        .unwrap_or_default()
}

fn status_word(s: &Status) -> &'static str {
    match s {
        Status::Pass => "pass",
        Status::Fail => "fail",
        Status::Vacuous => "vacuous",
    }
}

fn check_lines(out: &mut String, rows: &[(&str, &Check)]) {
    for (name, c) in rows {
        out.push_str(&format!("{name:<22} {:<8} ({} checked)\n", status_word(&c.status), c.checked));
        for f in &c.failures {
            out.push_str(&format!("    {f}\n"));
        }
    }
}

fn verify(cli: &Cli, d: Diagram, rule: SignRule, flip: Option<usize>) -> Result<Output> {
    let mut cc = CubeComplex::build(d, rule)?;
    if let Some(k) = flip {
        let CubeComplex { cube, rule, edge_index, mut edges, .. } = cc;
        let e = edges
            .get_mut(k)
            .ok_or_else(|| Error::Invalid(format!("edge {k} out of range ({} edges)", edge_index.len())))?;
        e.sign = -e.sign;
        for col in e.cols.iter_mut() {
            for t in col.iter_mut() {
                t.1 = -t.1;
            }
        }
        cc = CubeComplex::assemble(cube, rule, edges, edge_index)?;
    }
    let report = verify_complex(&cc);
    let full = cli.level != Some(Level::Fast);
    let burnside = if full {
        let plain = totalize(cc.diagram(), SignRule::Plain)?;
        Some(burnside_report(&cc, &plain).0)
    } else {
        None
    };
    let ok = report.ok() && burnside.as_ref().map_or(true, |b| b.ok());
    let text = match cli.format {
        Format::Json => {
            let mut v = json!({
                "hash": cc.diagram().hash(),
                "sign_rule": rule,
                "level": if full { "full" } else { "fast" },
                "complex": serde_json::to_value(&report).expect("report serializes"),
                "ok": ok,
            });
            if let Some(b) = &burnside {
                v["burnside"] = serde_json::to_value(b).expect("report serializes");
            }
            json_text(&v)
        }
        Format::Csv => {
            let mut s = String::from("check,status,checked,failures\n");
            let mut rows = checks(&report);
            if let Some(b) = &burnside {
                rows.extend(burnside_checks(b));
            }
            for (name, c) in rows {
                s.push_str(&format!("{name},{},{},{}\n", status_word(&c.status), c.checked, c.failures.len()));
            }
            s
        }
        Format::Text => {
            let mut s = String::new();
            check_lines(&mut s, &checks(&report));
            if let Some(b) = &burnside {
                check_lines(&mut s, &burnside_checks(b));
                s.push_str(&format!(
                    "{:<22} {}\n",
                    "conjugation-exact",
                    if b.conjugation_exact { "pass" } else { "fail" }
                ));
                s.push_str(&format!("ladybug faces: {}\n", b.hexagon.ladybug_faces));
            }
            s.push_str(if ok { "ok\n" } else { "FAILED\n" });
            s
        }
    };
    Ok(Output::new(text, ok))
}

fn compare(cli: &Cli, d: Diagram, rule: SignRule) -> Result<Output> {
    let plain = totalize(&d, SignRule::Plain)?;
    let cc = CubeComplex::build(d, rule)?;
    let (report, phi) = burnside_report(&cc, &plain);
    let g_or = homology(&cc.complex)?;
    let g_kh = homology(&plain)?;
    let same = g_or == g_kh;
    let ok = report.phi.ok() && report.conjugation_exact && same;
    let text = match cli.format {
        Format::Json => json_text(&json!({
            "hash": cc.diagram().hash(),
            "sign_rule": rule,
            "phi": phi.as_ref().map(|p| p.to_json()),
            "phi_failures": report.phi.failures,
            "conjugation_exact": report.conjugation_exact,
            "homology_equal": same,
            "homology": g_or.to_json(),
            "plain_homology": g_kh.to_json(),
        })),
        Format::Csv => format!(
            "phi,conjugation_exact,homology_equal\n{},{},{}\n",
            status_word(&report.phi.status),
            report.conjugation_exact,
            same
        ),
        Format::Text => {
            let mut s = String::new();
            match &phi {
                Some(p) => {
                    let minus: usize = p.signs.iter().flatten().filter(|&&x| x < 0).count();
                    let total: usize = p.signs.iter().map(|v| v.len()).sum();
                    s.push_str(&format!("phi: {minus} of {total} diagonal entries are -1\n"));
                }
                None => s.push_str(&format!("phi: none ({})\n", report.phi.failures.join("; "))),
            }
            s.push_str(&format!("conjugated complex equals plain: {}\n", report.conjugation_exact));
            s.push_str(&format!("oriented:  {}\n", poincare_string(&g_or)));
            s.push_str(&format!("plain:     {}\n", poincare_string(&g_kh)));
            s.push_str(&format!("homology equal: {same}\n"));
            s
        }
    };
    Ok(Output::new(text, ok))
}

fn movie(cli: &Cli, script: &Path, rule: SignRule) -> Result<Output> {
    let text = std::fs::read_to_string(script).map_err(|e| Error::Invalid(format!("{}: {e}", script.display())))?;
    let mut m = Movie::parse(&text)?;
    if cli.outer_face.is_some() {
        m.initial.outer_face = cli.outer_face;
    }
    let r = evaluate_movie(&m, rule)?;
    let ok = r.composite.is_chain_map() && r.steps.iter().all(|s| s.map.is_chain_map());
    let out = match cli.format {
        Format::Json => {
            let mut v = r.to_json();
            v["chain_maps"] = json!(ok);
            json_text(&v)
        }
        Format::Csv => induced_csv(&r.induced),
        Format::Text => movie_text(&r),
    };
    Ok(Output::new(out, ok))
}

fn group_name<T: std::fmt::Display>(orders: &[T]) -> String {
    if orders.is_empty() {
        return "0".into();
    }
    let parts: Vec<String> = orders
        .iter()
        .map(|o| if o.to_string() == "0" { "Z".to_string() } else { format!("Z/{o}") })
        .collect();
    parts.join("+")
}

fn induced_csv(maps: &[InducedMap]) -> String {
    let mut s = String::from("h,q,source,target,matrix\n");
    for m in maps {
        let rows: Vec<String> = m
            .matrix
            .iter()
            .map(|r| r.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "))
            .collect();
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            m.h,
            m.q,
            group_name(&m.source_orders),
            group_name(&m.target_orders),
            rows.join(";")
        ));
    }
    s
}

fn matrix_lines(out: &mut String, f: &foamkh::homology::ChainMap) {
    for (k, m) in f.maps.iter().enumerate() {
        let h = f.source.h_min + k as i64;
        if m.nrows * m.ncols == 0 {
            continue;
        }
        out.push_str(&format!("    h={h} {}x{}", m.nrows, m.ncols));
        if m.nrows * m.ncols > 400 {
            out.push_str(&format!(" ({} nonzero)\n", m.nnz()));
            continue;
        }
        out.push('\n');
        for row in m.to_dense() {
            let r: Vec<String> = row.iter().map(|x| format!("{x:>2}")).collect();
            out.push_str(&format!("      [{}]\n", r.join(" ")));
        }
    }
}

fn step_name(step: &foamkh::moves::Step) -> String {
    let v = serde_json::to_value(step).expect("step serializes");
    let obj = v.as_object().expect("steps are objects");
    let mut s = obj["step"].as_str().unwrap_or_default().to_string();
    for (k, x) in obj.iter().filter(|(k, x)| *k != "step" && !x.is_null()) {
        s.push_str(&format!(" {k}={}", x.to_string().trim_matches('"')));
    }
    s
}

fn movie_text(r: &MovieResult) -> String {
    let mut s = format!("initial: {}\n", r.initial.to_text());
    for (i, st) in r.steps.iter().enumerate() {
        s.push_str(&format!("step {}: {} -> {}\n", i + 1, step_name(&st.step), st.diagram.to_text()));
        matrix_lines(&mut s, &st.map);
    }
    s.push_str("composite:\n");
    matrix_lines(&mut s, &r.composite);
    let verdict = if r.composite.is_zero() {
        "zero".to_string()
    } else if let Some(sign) = r.composite.identity_sign() {
        format!("{}identity", if sign < 0 { "-" } else { "" })
    } else {
        "nonzero".to_string()
    };
    s.push_str(&format!("composite is {verdict}\n"));
    s.push_str("induced on homology:\n");
    for m in &r.induced {
        let rows: Vec<String> = m
            .matrix
            .iter()
            .map(|row| row.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "))
            .collect();
        s.push_str(&format!(
            "  (h={}, q={}) {} -> {}: [{}]\n",
            m.h,
            m.q,
            group_name(&m.source_orders),
            group_name(&m.target_orders),
            rows.join("; ")
        ));
    }
    s
}
