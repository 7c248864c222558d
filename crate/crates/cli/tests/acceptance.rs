//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use num_rational::BigRational;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use series_rearrange::{
    block_growth_profile, classify_zr_hint, convergence_report, decompose_until_blocks, decomposition_for_trace,
    fixing_evidence, greedy_batch, greedy_rearrange, make_escalating_blocks, make_square_blocks, scan_substantial,
    verify_sandwich, Class, Exact, Execution, GreedyOptions, PermutationPrefix, RearrangementTrace, Scalar,
    ScanVerdict, SeriesSpec, ZrHint,
};

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Duration, Box<dyn Fn() -> Check + 'a>);

fn q(p: i64, d: i64) -> Exact {
    BigRational::new(p.into(), d.into())
}

fn seeded_targets(seed: u64) -> Vec<Exact> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..50).map(|_| q(rng.gen_range(-5000..=5000), 1000)).collect()
}

fn builtins() -> [SeriesSpec; 2] {
    [make_square_blocks(), make_escalating_blocks(None)]
}

const GREEDY_STEPS: usize = 2000;

fn criterion_traces() -> Vec<(String, Vec<RearrangementTrace<Exact>>)> {
    builtins()
        .iter()
        .zip([11u64, 12])
        .map(|(spec, seed)| {
            let traces =
                greedy_batch(spec, &seeded_targets(seed), GREEDY_STEPS, GreedyOptions::default(), Execution::Parallel)
                    .expect("greedy runs");
            (spec.name().to_string(), traces)
        })
        .collect()
}

fn worked_example() -> Check {
    let mut p = PermutationPrefix::new();
    for i in [1, 3, 4, 2] {
        p.push_index(i).map_err(|e| e.to_string())?;
    }
    let seq = p.block_number_sequence().to_vec();
    if seq == [1, 2, 2, 1] {
        Ok(format!("{seq:?}"))
    } else {
        Err(format!("got {seq:?}"))
    }
}

/// Number of maximal runs of set bits, recounted from scratch.
fn runs_in(bits: &[u64]) -> usize {
    let mut carry = 0u64;
    let mut runs = 0;
    for &w in bits {
        runs += (w & !((w << 1) | carry)).count_ones() as usize;
        carry = w >> 63;
    }
    runs
}

fn counter_oracle() -> Check {
    const LEN: usize = 10_000;
    let sequences: Vec<(u64, usize)> = (0..100u64).map(|s| (s, if s % 2 == 0 { LEN } else { 3 * LEN })).collect();
    let failures = std::thread::scope(|scope| {
        let handles: Vec<_> = sequences
            .chunks(13)
            .map(|chunk| {
                scope.spawn(move || {
                    let mut bad = Vec::new();
                    for &(seed, universe) in chunk {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        let mut pool: Vec<usize> = (0..universe).collect();
                        pool.shuffle(&mut rng);
                        let mut bits = vec![0u64; universe.div_ceil(64)];
                        let mut prefix = PermutationPrefix::new();
                        for (step, &idx) in pool[..LEN].iter().enumerate() {
                            prefix.push_index(idx).expect("injective");
                            bits[idx / 64] |= 1 << (idx % 64);
                            if prefix.block_count() != runs_in(&bits) {
                                bad.push((seed, step));
                                break;
                            }
                        }
                    }
                    bad
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker")).collect::<Vec<_>>()
    });
    if failures.is_empty() {
        Ok("100 sequences x 10^4 pushes agree with a full recount".into())
    } else {
        Err(format!("mismatches (seed, step): {failures:?}"))
    }
}

fn rule_and_type_r(traces: &[(String, Vec<RearrangementTrace<Exact>>)]) -> Check {
    let mut bad = Vec::new();
    for (name, ts) in traces {
        for (i, t) in ts.iter().enumerate() {
            if t.len() != GREEDY_STEPS || t.truncated().is_some() {
                bad.push(format!("{name}#{i}: short trace"));
            }
            if let Err(step) = t.check_rule_conformance() {
                bad.push(format!("{name}#{i}: rule broken at step {step}"));
            }
            let spec = builtins().into_iter().find(|s| s.name() == name).expect("known");
            match series_rearrange::is_type_r(t.prefix(), &spec) {
                Ok(v) if v.is_type_r() => {}
                other => bad.push(format!("{name}#{i}: not type R ({other:?})")),
            }
        }
    }
    if bad.is_empty() {
        Ok(format!("2 generators x 50 targets x {GREEDY_STEPS} exact steps"))
    } else {
        Err(bad.join("; "))
    }
}

fn sandwich(traces: &[(String, Vec<RearrangementTrace<Exact>>)]) -> Check {
    let (mut pass, mut fail, mut unverifiable) = (0, 0, 0);
    let mut first_fail = None;
    for (name, ts) in traces {
        let spec = builtins().into_iter().find(|s| s.name() == name).expect("known");
        for t in ts {
            let d = decomposition_for_trace(&spec, t).map_err(|e| e.to_string())?;
            let report = verify_sandwich(t, &d, t.max_block_number()).map_err(|e| e.to_string())?;
            pass += report.count(series_rearrange::SandwichStatus::Pass);
            unverifiable += report.count(series_rearrange::SandwichStatus::Unverifiable);
            let f = report.count(series_rearrange::SandwichStatus::Fail);
            if f > 0 && first_fail.is_none() {
                first_fail = report.failures().next().map(|r| format!("{name} target {}: i = {}", t.target(), r.i));
            }
            fail += f;
        }
    }
    let counts = format!("{pass} pass, {fail} fail, {unverifiable} unverifiable");
    if fail == 0 && pass > 0 {
        Ok(counts)
    } else {
        Err(format!("{counts}; first failure {first_fail:?}"))
    }
}

/// First step at which the block number exceeds 10 on square blocks with
/// r = 1, from the first recorded run (exact and float agree).
const SQUARE_R1_FIRST_ABOVE_TEN: usize = 143;

fn singleton_example() -> Check {
    let spec = make_square_blocks();
    let zero = greedy_rearrange(&spec, &q(0, 1), 10_000, GreedyOptions::default()).map_err(|e| e.to_string())?;
    let exact_one = greedy_rearrange(&spec, &q(1, 1), 1000, GreedyOptions::default()).map_err(|e| e.to_string())?;
    let float_one = greedy_rearrange(&spec, &1.0f64, 1_000_000, GreedyOptions::default()).map_err(|e| e.to_string())?;
    let checkpoints = [10, 100, 1000, 10_000, 100_000, 1_000_000];
    let profile = block_growth_profile(&float_one, &checkpoints).map_err(|e| e.to_string())?;
    let exceeded_at = profile.iter().find(|&&(_, c)| c > 10).map(|&(n, _)| n);
    let first_exact = exact_one.first_step_exceeding(10);
    let first_float = float_one.first_step_exceeding(10);
    let detail = format!(
        "r=0 max {}; r=1 profile {profile:?}; first step above 10: exact {first_exact:?}, float {first_float:?}",
        zero.max_block_number()
    );
    let ok = zero.max_block_number() <= 2
        && exceeded_at.is_some()
        && first_exact == Some(SQUARE_R1_FIRST_ABOVE_TEN)
        && first_float == Some(SQUARE_R1_FIRST_ABOVE_TEN);
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn st_example() -> Check {
    let spec = make_escalating_blocks(None);
    let decomp = decompose_until_blocks::<Exact>(&spec, 50, series_rearrange::rearrange::DEFAULT_HORIZON_CAP)
        .map_err(|e| format!("{e}"))?;
    let mut out = Vec::new();
    for kind in [Class::Positive, Class::Negative] {
        let r = scan_substantial(&decomp, kind, 0, &[1], Execution::Parallel).map_err(|e| e.to_string())?;
        match &r.verdict {
            ScanVerdict::WitnessFound { k: 0, epsilon, .. } if *epsilon >= q(1, 1) => {
                out.push(format!("{kind}: witness k=0, eps {}", epsilon.to_f64()))
            }
            v => return Err(format!("{kind}: {v:?}")),
        }
    }
    Ok(out.join("; "))
}

fn st_violation() -> Check {
    let spec = make_square_blocks();
    let decomp = decompose_until_blocks::<Exact>(&spec, 2000, 1 << 24).map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    for kind in [Class::Positive, Class::Negative] {
        let r = scan_substantial(&decomp, kind, 5, &[1], Execution::Parallel).map_err(|e| e.to_string())?;
        if r.verdict != ScanVerdict::NoWitnessAtHorizon {
            return Err(format!("{kind}: {:?}", r.verdict));
        }
        for c in &r.cells {
            let h: Vec<usize> = c.horizons.iter().map(|h| h.horizon).collect();
            let m: Vec<Exact> = c.horizons.iter().filter_map(|h| h.min.clone().map(|(v, _)| v)).collect();
            if h != [500, 1000, 2000] || m.len() != 3 || !(m[0] > m[1] && m[1] > m[2]) {
                return Err(format!("{kind} k={}: horizons {h:?}, minima {m:?}", c.k));
            }
        }
        reports.push(r);
    }
    let probe = greedy_rearrange(&spec, &q(0, 1), 10_000, GreedyOptions::default()).map_err(|e| e.to_string())?;
    let hint = classify_zr_hint(&reports[0], &reports[1], fixing_evidence(&probe));
    if hint != ZrHint::Singleton {
        return Err(format!("{hint}"));
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = rearr(
        &["scan", "--series", "square_blocks", "--kmax", "5", "--blocks", "2000", "--i0", "1", "--no-analytic"],
        dir.path(),
    )?;
    if !out.contains("hint: Z_R singleton") {
        return Err(format!("CLI printed: {out}"));
    }
    Ok("k = 0..5 minima strictly decrease over 500/1000/2000 blocks, no witness, hint singleton".into())
}

/// Largest consumed term in the final quarter of switches for escalating
/// blocks, r = 3, 10^5 exact steps, from the first recorded run: 1/3558.
const ESCALATING_TAIL_TERM_LIMIT: f64 = 0.01;

fn switch_envelope() -> Check {
    let spec = make_escalating_blocks(None);
    let trace = greedy_rearrange(&spec, &q(3, 1), 100_000, GreedyOptions::default()).map_err(|e| e.to_string())?;
    let report = convergence_report(&trace);
    let term = report.tail_max_term.as_ref().map(Scalar::to_f64);
    let detail = format!(
        "{} switches, tail from #{}, tail max error {:?}, max term {term:?}",
        report.switch_errors.len(),
        report.tail_start,
        report.tail_max_error.as_ref().map(Scalar::to_f64),
    );
    if report.tail_bounded && term.is_some_and(|m| m < ESCALATING_TAIL_TERM_LIMIT) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rearr(args: &[&str], out_dir: &Path) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_rearr"))
        .args(args)
        .arg("--out-dir")
        .arg(out_dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("rearr {args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .expect("read dir")
        .map(|e| {
            let e = e.expect("entry");
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).expect("read"))
        })
        .collect()
}

fn reproducibility() -> Check {
    let indices = tempfile::NamedTempFile::new().map_err(|e| e.to_string())?;
    fs::write(indices.path(), "1\n3\n4\n2\n").map_err(|e| e.to_string())?;
    let idx = indices.path().to_str().expect("utf-8 path").to_string();
    let runs: Vec<Vec<&str>> = vec![
        vec!["generate", "--series", "escalating", "--horizon", "300"],
        vec!["rearrange", "--series", "square_blocks", "--target", "-7/3", "--steps", "3000"],
        vec!["scan", "--series", "square_blocks", "--kmax", "3", "--blocks", "200"],
        vec!["blocknum", "--indices", &idx, "--one-based"],
    ];
    let mut compared = 0;
    for args in &runs {
        let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
        let (sa, sb) = (rearr(args, a.path())?, rearr(args, b.path())?);
        if sa != sb {
            return Err(format!("{}: stdout differs", args[0]));
        }
        let (fa, fb) = (snapshot(a.path()), snapshot(b.path()));
        if fa.is_empty() || fa != fb {
            return Err(format!("{}: files differ", args[0]));
        }
        compared += fa.len();
        if args[0] == "rearrange" {
            let trace = a.path().join("trace.csv");
            let trace = trace.to_str().expect("utf-8 path");
            let verify = ["verify", "--series", "square_blocks", "--trace", trace];
            let (c, d) =
                (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
            if rearr(&verify, c.path())? != rearr(&verify, d.path())? || snapshot(c.path()) != snapshot(d.path()) {
                return Err("verify: outputs differ".into());
            }
            compared += snapshot(c.path()).len();
        }
    }
    Ok(format!("{compared} output files byte-identical across repeated exact runs"))
}

fn main() -> ExitCode {
    let traces = std::sync::OnceLock::new();
    let traces = || traces.get_or_init(criterion_traces);
    let criteria: Vec<Criterion> = vec![
        ("block-number worked example", Duration::from_millis(1), Box::new(worked_example)),
        ("counter oracle equivalence", Duration::from_secs(10), Box::new(counter_oracle)),
        ("greedy rule conformance and type R", Duration::from_secs(60), Box::new(|| rule_and_type_r(traces()))),
        ("sandwich inequality", Duration::from_secs(60), Box::new(|| sandwich(traces()))),
        ("singleton example block growth", Duration::from_secs(120), Box::new(singleton_example)),
        ("ST example on escalating blocks", Duration::from_secs(10), Box::new(st_example)),
        ("ST violation on square blocks", Duration::from_secs(60), Box::new(st_violation)),
        ("switch-error envelope", Duration::from_secs(60), Box::new(switch_envelope)),
        ("reproducibility", Duration::from_secs(120), Box::new(reproducibility)),
    ];
    let mut failed = 0;
    for (n, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let took = start.elapsed();
        let timing = format!("{took:.2?} (limit {limit:?})");
        let (tag, detail) = match result {
            Ok(d) if took <= *limit => ("PASS", d),
            Ok(d) => ("FAIL", format!("too slow; {d}")),
            Err(e) => ("FAIL", e),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("{tag} [{}] {name}: {detail} [{timing}]", n + 1);
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
