//! Acceptance suite. Runs every criterion at its stated tolerance, prints
//! one PASS/FAIL line per criterion and exits non-zero if any failed.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use dcaudit_cli::{load_scenario, universe};
use dcaudit_core::audit::{self, AdvantageReport, AuditKind, AuditOptions};
use dcaudit_core::collectors::CollectorSpec;
use dcaudit_core::hi::{check_history_independence, impl_by_name, HiVerdict, DEFAULT_BUDGET};
use dcaudit_core::scenario::Overrides;
use dcaudit_core::simulators::{BoardSimulator, CounterSimulator, ReplaySimulator};
use serde_json::Value;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn dcaudit(args: &[&str], out: &Path) -> (i32, Value) {
    let status = Command::new(env!("CARGO_BIN_EXE_dcaudit"))
        .args(args)
        .arg("--out")
        .arg(out)
        .status()
        .expect("binary runs");
    let text = std::fs::read_to_string(out).unwrap_or_else(|_| "null".into());
    (status.code().unwrap_or(-1), serde_json::from_str(&text).unwrap_or(Value::Null))
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn weak(scenario: &str, sim: &dyn dcaudit_core::Simulator) -> Result<AdvantageReport, String> {
    let s = load_scenario(scenario).map_err(|e| e.to_string())?;
    let collector = s.collector_spec().map_err(|e| e.to_string())?;
    let opts = s.options(&Overrides::default(), Some(AuditKind::Weak));
    audit::estimate_weak_advantage(&collector, sim, &s.requester, &s.environment, &opts).map_err(|e| e.to_string())
}

fn separation_strong(dir: &Path) -> Outcome {
    let s = load_scenario("thm1_separation").map_err(|e| e.to_string())?;
    let battery = vec![audit::distinguisher_by_name("response_parity").unwrap()];
    let opts = AuditOptions::new(16, 1000, s.master_seed);
    let report = audit::estimate_strong_advantage(&CollectorSpec::Counter, &s.requester, &s.environment, &battery, &opts)
        .map_err(|e| e.to_string())?;
    let (code, _) = dcaudit(&["audit", "strong", "--scenario", "thm1_separation"], &dir.join("c1.json"));
    check(
        report.point_estimate == 1.0 && code == 1,
        format!("parity advantage {} over 1000 trials, cli exit {code}", report.point_estimate),
    )
}

fn separation_weak() -> Outcome {
    let report = weak("counter_weak", &CounterSimulator)?;
    check(
        report.trials == 10_000 && report.lambda == 32 && report.point_estimate <= 1e-3,
        format!("mismatch rate {} over {} trials at lambda {}", report.point_estimate, report.trials, report.lambda),
    )
}

fn board_exact() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for name in ["board_random_interleave_p20", "board_random_interleave", "board_random_interleave_p80"] {
        let replay = ReplaySimulator::new(CollectorSpec::Board);
        for (label, report) in [("board", weak(name, &BoardSimulator)?), ("replay", weak(name, &replay)?)] {
            ok &= report.trials == 1000 && report.mismatches == Some(0);
            details.push(format!("{name}/{label}={}", report.mismatches.unwrap_or(u64::MAX)));
        }
    }
    check(ok, format!("mismatches {}", details.join(" ")))
}

fn hi_checker() -> Outcome {
    let keys = universe(3);
    let verdict = |name: &str| check_history_independence(impl_by_name(name).unwrap(), &keys, 6, DEFAULT_BUDGET);
    let set = verdict("sorted_set").map_err(|e| e.to_string())?;
    let list = verdict("compact_list").map_err(|e| e.to_string())?;
    let tomb = verdict("tombstone_list").map_err(|e| e.to_string())?;
    let witness_len = match &tomb {
        HiVerdict::Counterexample { s, t, .. } => Some(s.len().max(t.len())),
        HiVerdict::Ok { .. } => None,
    };
    check(
        set.is_ok() && list.is_ok() && witness_len.is_some_and(|n| n <= 2),
        format!("sorted_set ok={}, compact_list ok={}, tombstone witness length {:?}", set.is_ok(), list.is_ok(), witness_len),
    )
}

fn tombstone_negative(dir: &Path) -> Outcome {
    let (code, report) = dcaudit(&["audit", "weak", "--scenario", "tombstone_negative"], &dir.join("c5.json"));
    let rate = report["point_estimate"].as_f64().unwrap_or(0.0);
    check(code == 1 && rate >= 0.9, format!("mismatch rate {rate}, cli exit {code}"))
}

fn experiment(dir: &Path, name: &str, scenario: &str) -> Result<(i32, Value), String> {
    let (code, report) = dcaudit(&["experiment", name, "--scenario", scenario], &dir.join(format!("{name}.json")));
    if report.is_null() {
        return Err(format!("no report, exit {code}"));
    }
    Ok((code, report))
}

fn k_representative(dir: &Path) -> Outcome {
    let (code, report) = experiment(dir, "thm5", "board_k")?;
    let checks = report["checks"].as_array().cloned().unwrap_or_default();
    let ks: Vec<String> = checks.iter().map(|c| c["label"].as_str().unwrap_or("?").to_string()).collect();
    let ok = code == 0
        && ks == ["k=1", "k=2", "k=4", "k=8"]
        && checks.iter().all(|c| c["measured"].as_f64() == Some(0.0) && c["holds"] == Value::Bool(true));
    check(ok, format!("eps_k = 0 and holds for {}", ks.join(", ")))
}

fn composition(dir: &Path, name: &str, scenario: &str, extra: &[&str]) -> Outcome {
    let (code, report) = experiment(dir, name, scenario)?;
    let c = &report["checks"][0];
    let mut ok = code == 0 && c["measured"].as_f64() == Some(0.0) && c["holds"] == Value::Bool(true);
    ok &= report["trials"].as_u64() == Some(1000);
    for key in extra {
        ok &= c["components"][key].as_f64() == Some(0.0);
    }
    check(
        ok,
        format!("measured {} <= bound {} + slack {:.4}, components {}", c["measured"], c["bound"], c["slack"].as_f64().unwrap_or(f64::NAN), c["components"]),
    )
}

fn vault_triangle() -> Outcome {
    let s = load_scenario("vault_privacy").map_err(|e| e.to_string())?;
    let run = |kind| s.run_audit(kind, &Overrides::default()).map_err(|e| e.to_string());
    let (w, p, st) = (run(AuditKind::Weak)?, run(AuditKind::Privacy)?, run(AuditKind::Strong)?);
    let slack = audit::hoeffding_bound(s.trials, audit::DEFAULT_CONFIDENCE);
    let bound = 2.0 * (w.point_estimate + p.point_estimate) + slack;
    check(
        w.passed() && p.passed() && st.passed()
            && w.point_estimate <= slack
            && p.point_estimate <= slack
            && st.point_estimate <= bound,
        format!("weak {} privacy {} strong {} (bound {bound:.4}, slack {slack:.4})", w.point_estimate, p.point_estimate, st.point_estimate),
    )
}

fn determinism(dir: &Path) -> Outcome {
    let a = dir.join("jobs1.json");
    let b = dir.join("jobs8.json");
    let args = ["audit", "weak", "--scenario", "board_random_interleave"];
    let (c1, _) = dcaudit(&[&args[..], &["--jobs", "1"]].concat(), &a);
    let (c8, _) = dcaudit(&[&args[..], &["--jobs", "8"]].concat(), &b);
    let (ra, rb) = (std::fs::read(&a).unwrap_or_default(), std::fs::read(&b).unwrap_or_default());
    check(
        c1 == 0 && c8 == 0 && !ra.is_empty() && ra == rb,
        format!("reports identical: {} ({} bytes)", ra == rb, ra.len()),
    )
}

fn replay_divergence() -> Outcome {
    let report = weak("counter_replay", &ReplaySimulator::new(CollectorSpec::Counter))?;
    let diverged = report.simulator_errors.as_ref().and_then(|m| m.get("replay_divergence")).copied().unwrap_or(0);
    check(
        report.trials == 1000 && diverged * 1000 >= 999 * report.trials,
        format!("{diverged} of {} replays diverged", report.trials),
    )
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let dir = dir.path();
    let criteria: Vec<Criterion> = vec![
        ("counter separation, strong direction", Box::new(|| separation_strong(dir))),
        ("counter separation, weak direction", Box::new(separation_weak)),
        ("board exact simulation (bespoke and replay)", Box::new(board_exact)),
        ("history independence checker", Box::new(hi_checker)),
        ("tombstone negative control", Box::new(|| tombstone_negative(dir))),
        ("k-representative bound", Box::new(|| k_representative(dir))),
        ("parallel composition bound", Box::new(|| composition(dir, "thm6", "parallel", &["eps_1", "eps_2"]))),
        (
            "sequential composition bound",
            Box::new(|| composition(dir, "thm7", "sequential", &["eps_1", "eps_2", "eps"])),
        ),
        ("privacy plus weak implies strong (vault)", Box::new(vault_triangle)),
        ("report determinism across --jobs", Box::new(|| determinism(dir))),
        ("replay divergence on the counter", Box::new(replay_divergence)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
