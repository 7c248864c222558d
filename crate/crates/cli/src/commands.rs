use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::{json, Value};
use series_rearrange::blocks::BlockDecomposition;
use series_rearrange::scan::SCAN_CSV_HEADER;
use series_rearrange::{
    classify_zr_hint, decompose_until_blocks, decomposition_for_trace, default_i0_grid, fixing_evidence,
    greedy_rearrange, read_trace_csv, scan_substantial, verify_sandwich, Arithmetic, BlockError, Class, Exact,
    Execution, GreedyOptions, PermutationError, PermutationPrefix, RearrangeError, RearrangementTrace, SandwichError,
    SandwichStatus, Scalar, SeriesError, TypeRVerdict, ZrHint,
};

use crate::config::{ProbeConfig, ResolvedSeries, RunConfig};
use crate::{BlocknumArgs, GenerateArgs, Outcome, RearrangeArgs, ScanArgs, UsageError, VerifyArgs};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn series_err(e: SeriesError) -> anyhow::Error {
    usage(e.to_string())
}

fn rearrange_err(e: RearrangeError) -> anyhow::Error {
    match e {
        RearrangeError::Io(_) => e.into(),
        other => usage(other.to_string()),
    }
}

fn block_err(e: BlockError) -> anyhow::Error {
    match e {
        BlockError::Io(_) | BlockError::Csv(_) => e.into(),
        other => usage(other.to_string()),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_json(dir: &Path, name: &str, value: &Value) -> Result<()> {
    let mut out = create(dir, name)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Exact value for short renderings, otherwise a float approximation.
fn brief<T: Scalar>(v: &T) -> String {
    let text = v.render();
    if text.len() <= 32 {
        text
    } else {
        format!("~{:e}", v.to_f64())
    }
}

fn parse_scalar<T: Scalar>(text: &str, what: &str) -> Result<T> {
    T::parse(text).map_err(|e| usage(format!("{what}: {e}")))
}

macro_rules! dispatch {
    ($mode:expr, $f:ident ( $($arg:expr),* )) => {
        match $mode {
            Arithmetic::Exact => $f::<Exact>($($arg),*),
            Arithmetic::Float => $f::<f64>($($arg),*),
        }
    };
}

pub fn generate(a: &GenerateArgs) -> Result<Outcome> {
    let s = a.series.resolve()?;
    if a.horizon == 0 {
        return Err(usage("--horizon must be at least 1"));
    }
    let mut cfg = RunConfig::new("generate", &s);
    cfg.horizon = Some(a.horizon);
    dispatch!(s.arithmetic, generate_t(&s, a.horizon, &cfg, &a.out.out_dir))
}

fn generate_t<T: Scalar>(s: &ResolvedSeries, horizon: usize, cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    let terms: Vec<T> = s.spec.generate_prefix(horizon).map_err(series_err)?;
    let header = cfg.header();
    let mut out = create(dir, "terms.csv")?;
    writeln!(out, "# {header}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "term", "class"])?;
    for (n, t) in terms.iter().enumerate() {
        w.write_record([n.to_string(), t.render(), t.classify().label().to_string()])?;
    }
    w.flush()?;
    let decomp = BlockDecomposition::from_terms(terms, s.spec.classify(horizon).ok());
    let mut out = create(dir, "blocks.csv")?;
    decomp.write_csv(&mut out, Some(&header))?;
    out.flush()?;
    println!(
        "{}: {horizon} terms, {} complete P blocks, {} complete N blocks",
        s.spec,
        decomp.complete_count(Class::Positive),
        decomp.complete_count(Class::Negative)
    );
    Ok(Outcome::Ok)
}

fn default_checkpoints(steps: usize) -> Vec<usize> {
    let mut out: Vec<usize> =
        std::iter::successors(Some(10usize), |c| c.checked_mul(10)).take_while(|&c| c < steps).collect();
    out.push(steps);
    out
}

pub fn rearrange(a: &RearrangeArgs) -> Result<Outcome> {
    let s = a.series.resolve()?;
    if a.steps == 0 {
        return Err(usage("--steps must be at least 1"));
    }
    let checkpoints = match &a.checkpoints {
        Some(c) => {
            if c.is_empty() || c.windows(2).any(|w| w[0] >= w[1]) || c[0] == 0 || *c.last().unwrap() > a.steps {
                return Err(usage("--checkpoints must be strictly ascending within 1..=--steps"));
            }
            c.clone()
        }
        None => default_checkpoints(a.steps),
    };
    let mut cfg = RunConfig::new("rearrange", &s);
    cfg.steps = Some(a.steps);
    cfg.target = Some(a.target.clone());
    cfg.horizon_cap = Some(a.horizon_cap);
    cfg.checkpoints = Some(checkpoints.clone());
    dispatch!(s.arithmetic, rearrange_t(&s, a, &checkpoints, &cfg))
}

fn rearrange_t<T: Scalar>(
    s: &ResolvedSeries,
    a: &RearrangeArgs,
    checkpoints: &[usize],
    cfg: &RunConfig,
) -> Result<Outcome> {
    let target: T = parse_scalar(&a.target, "--target")?;
    let opts = GreedyOptions { horizon_cap: a.horizon_cap };
    let trace = greedy_rearrange(&s.spec, &target, a.steps, opts).map_err(rearrange_err)?;
    // a truncated trace only reports the checkpoints it reached
    let reached: Vec<usize> = checkpoints.iter().copied().filter(|&c| c <= trace.len()).collect();
    let summary = trace.summary(&reached).map_err(rearrange_err)?;
    let dir = &a.out.out_dir;
    if !a.no_trace {
        let mut out = create(dir, "trace.csv")?;
        trace.write_csv(&mut out, Some(&cfg.header())).map_err(rearrange_err)?;
        out.flush()?;
    }
    write_json(dir, "summary.json", &json!({ "config": cfg, "summary": summary }))?;

    println!(
        "{} steps toward {}: max block number {}, {} sign switches",
        trace.len(),
        target.render(),
        summary.max_block_number,
        summary.sign_switches
    );
    let profile: Vec<String> = summary.growth_profile.iter().map(|(c, m)| format!("{c}:{m}")).collect();
    println!("growth profile {}", profile.join(" "));
    let report = series_rearrange::convergence_report(&trace);
    if let (Some(err), Some(term)) = (&report.tail_max_error, &report.tail_max_term) {
        println!(
            "final-quarter switch error max {}, largest term {}, bounded {}",
            brief(err),
            brief(term),
            report.tail_bounded
        );
    }
    match trace.truncated() {
        Some(t) => {
            eprintln!("truncated: {}", serde_json::to_string(t)?);
            Ok(Outcome::Truncated)
        }
        None => Ok(Outcome::Ok),
    }
}

pub fn scan(a: &ScanArgs) -> Result<Outcome> {
    let s = a.series.resolve()?;
    if a.blocks == 0 {
        return Err(usage("--blocks must be at least 1"));
    }
    let grid = a.i0_grid.clone().unwrap_or_else(|| default_i0_grid(a.blocks));
    if grid.contains(&0) {
        return Err(usage("--i0 labels start at 1"));
    }
    let needed = a.k_max + grid.iter().copied().max().unwrap_or(1);
    if a.blocks < needed {
        return Err(usage(format!(
            "--blocks {} is too small: k_max + max(i0) needs at least {needed} blocks",
            a.blocks
        )));
    }
    let mut cfg = RunConfig::new("scan", &s);
    cfg.blocks = Some(a.blocks);
    cfg.k_max = Some(a.k_max);
    cfg.i0_grid = Some(grid.clone());
    cfg.analytic_override = Some(!a.no_analytic);
    if !a.no_probe {
        cfg.probe = Some(ProbeConfig { target: a.probe_target.clone(), steps: a.probe_steps });
    }
    dispatch!(s.arithmetic, scan_t(&s, a, &grid, &cfg))
}

fn scan_t<T: Scalar>(s: &ResolvedSeries, a: &ScanArgs, grid: &[usize], cfg: &RunConfig) -> Result<Outcome> {
    let decomp = decompose_until_blocks::<T>(&s.spec, a.blocks, a.max_terms).map_err(|e| match e {
        BlockError::InsufficientBlocks { needed, found, horizon } => usage(format!(
            "insufficient horizon: scanning needs {needed} complete blocks of each kind, \
             only {found} reachable within {horizon} terms"
        )),
        other => block_err(other),
    })?;
    let exec = if a.sequential { Execution::Sequential } else { Execution::Parallel };
    let analytic = if a.no_analytic { None } else { s.spec.analytic_st() };
    let positive = scan_substantial(&decomp, Class::Positive, a.k_max, grid, exec)
        .map_err(block_err)?
        .with_analytic_override(analytic.map(|st| st.positive));
    let negative = scan_substantial(&decomp, Class::Negative, a.k_max, grid, exec)
        .map_err(block_err)?
        .with_analytic_override(analytic.map(|st| st.negative));

    let (fixing, probe) = if a.no_probe {
        (false, Value::Null)
    } else {
        let target: T = parse_scalar(&a.probe_target, "--probe-target")?;
        let trace = greedy_rearrange(&s.spec, &target, a.probe_steps.max(1), GreedyOptions::default())
            .map_err(rearrange_err)?;
        let fixing = fixing_evidence(&trace);
        let report = series_rearrange::convergence_report(&trace);
        (
            fixing,
            json!({
                "target": target.render(),
                "steps": trace.len(),
                "max_block_number": trace.max_block_number(),
                "truncated": trace.truncated().is_some(),
                "tail_bounded": report.tail_bounded,
                "fixing_evidence": fixing,
            }),
        )
    };
    let hint = classify_zr_hint(&positive, &negative, fixing);

    let dir = &a.out.out_dir;
    write_json(
        dir,
        "scan.json",
        &json!({
            "config": cfg,
            "positive": positive.to_json(),
            "negative": negative.to_json(),
            "probe": probe,
            "hint": hint.to_string(),
            "caveat": ZrHint::CAVEAT,
        }),
    )?;
    let mut out = create(dir, "scan.csv")?;
    writeln!(out, "# {}", cfg.header())?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCAN_CSV_HEADER)?;
    positive.write_csv_rows(&mut w)?;
    negative.write_csv_rows(&mut w)?;
    w.flush()?;

    for r in [&positive, &negative] {
        let verdict = match &r.verdict {
            series_rearrange::ScanVerdict::WitnessFound { k, epsilon, i0 } => {
                format!("witness_found(k={k}, eps={}, i0={i0})", brief(epsilon))
            }
            series_rearrange::ScanVerdict::NoWitnessAtHorizon => "no_witness_at_horizon".to_string(),
        };
        let analytic = match r.analytic_override {
            Some(v) => format!(", analytic {v}"),
            None => String::new(),
        };
        println!("ST_{} over {} blocks: {verdict}{analytic}", r.kind.label(), r.horizon_blocks);
    }
    println!("{hint} ({})", ZrHint::CAVEAT);
    Ok(Outcome::Ok)
}

pub fn verify(a: &VerifyArgs) -> Result<Outcome> {
    let s = a.series.resolve()?;
    if a.bound == Some(0) {
        return Err(usage("--bound must be at least 1"));
    }
    dispatch!(s.arithmetic, verify_t(&s, a))
}

/// Target recorded in a trace header written by `rearrange`.
fn header_target(comments: &[String]) -> Option<String> {
    let cfg: Value = serde_json::from_str(comments.first()?).ok()?;
    cfg.get("target")?.as_str().map(str::to_string)
}

fn verify_t<T: Scalar>(s: &ResolvedSeries, a: &VerifyArgs) -> Result<Outcome> {
    let file = File::open(&a.trace).with_context(|| format!("opening {}", a.trace.display()))?;
    let (rows, comments) = read_trace_csv::<T, _>(BufReader::new(file)).map_err(|e| match e {
        RearrangeError::Io(_) => e.into(),
        other => usage(format!("{}: {other}", a.trace.display())),
    })?;
    if rows.is_empty() {
        return Err(usage(format!("{}: trace has no rows", a.trace.display())));
    }
    let target_text = a.target.clone().or_else(|| header_target(&comments)).unwrap_or_else(|| "0".into());
    let target: T = parse_scalar(&target_text, "target")?;
    let trace = RearrangementTrace::from_choices(&s.spec, target, &rows).map_err(|e| match e {
        RearrangeError::Permutation(PermutationError::Duplicate { index, step }) => {
            usage(format!("{}: index {index} chosen twice (row {})", a.trace.display(), step + 1))
        }
        other => usage(format!("{}: {other}", a.trace.display())),
    })?;
    let bound = a.bound.unwrap_or_else(|| trace.max_block_number().max(1));
    let mut cfg = RunConfig::new("verify", s);
    cfg.target = Some(target_text);
    cfg.bound = Some(bound);
    cfg.trace_rows = Some(trace.len());
    let dir = &a.out.out_dir;

    if let TypeRVerdict::Violation { first, second } = trace.type_r() {
        let (i, j) = (trace.steps()[first].index, trace.steps()[second].index);
        println!("type-R violation: positions {first} and {second} choose indices {i} then {j}");
        write_json(
            dir,
            "verify.json",
            &json!({
                "config": cfg,
                "type_r": { "ok": false, "first": first, "second": second, "indices": [i, j] },
            }),
        )?;
        return Ok(Outcome::VerificationFailed);
    }
    let decomp = decomposition_for_trace(&s.spec, &trace).map_err(block_err)?;
    let report = verify_sandwich(&trace, &decomp, bound).map_err(|e| match e {
        SandwichError::ZeroBound | SandwichError::NotTypeR { .. } => usage(e.to_string()),
        other => other.into(),
    })?;
    let mut out = create(dir, "verify.csv")?;
    report.write_csv(&mut out, Some(&cfg.header()))?;
    out.flush()?;
    let counts = json!({
        "pass": report.count(SandwichStatus::Pass),
        "fail": report.count(SandwichStatus::Fail),
        "unverifiable": report.count(SandwichStatus::Unverifiable),
    });
    write_json(
        dir,
        "verify.json",
        &json!({
            "config": cfg,
            "type_r": { "ok": true },
            "greedy_rule_conformance": trace.check_rule_conformance().is_ok(),
            "sandwich": {
                "bound": bound,
                "starts_negative": report.starts_negative,
                "counts": counts,
            },
        }),
    )?;
    println!(
        "type R: ok; sandwich with C = {bound}: {} pass, {} fail, {} unverifiable",
        report.count(SandwichStatus::Pass),
        report.count(SandwichStatus::Fail),
        report.count(SandwichStatus::Unverifiable)
    );
    if let Some(f) = report.failures().next() {
        println!(
            "first failure at N_{} (step {}): {} <= {} <= {}",
            f.i,
            f.step,
            f.lower.as_ref().map_or("-".into(), brief),
            brief(&f.value),
            f.upper.as_ref().map_or("-".into(), brief)
        );
        return Ok(Outcome::VerificationFailed);
    }
    Ok(Outcome::Ok)
}

pub fn blocknum(a: &BlocknumArgs) -> Result<Outcome> {
    let file = File::open(&a.indices).with_context(|| format!("opening {}", a.indices.display()))?;
    let perm_err = |e: PermutationError| match e {
        PermutationError::Io(_) => anyhow::Error::from(e),
        other => usage(format!("{}: {other}", a.indices.display())),
    };
    let indices = PermutationPrefix::read_indices(BufReader::new(file), a.one_based).map_err(perm_err)?;
    let prefix = PermutationPrefix::from_images(indices).map_err(perm_err)?;
    let mut cfg = RunConfig::bare("blocknum");
    cfg.one_based = Some(a.one_based);
    cfg.steps = Some(prefix.len());
    let mut out = create(&a.out.out_dir, "blocknum.csv")?;
    prefix.write_block_sequence_csv(&mut out, a.one_based, Some(&cfg.header())).map_err(perm_err)?;
    out.flush()?;
    let seq: Vec<String> = prefix.block_number_sequence().iter().map(|c| c.to_string()).collect();
    if seq.len() <= 20 {
        println!("block number sequence ({})", seq.join(", "));
    }
    println!("{} steps, max block number {}", prefix.len(), prefix.max_block_number());
    Ok(Outcome::Ok)
}
