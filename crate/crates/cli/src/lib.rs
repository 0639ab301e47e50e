//! Command implementations behind the `dcaudit` binary.
//!
//! Every command writes one pretty-printed JSON document, newline
//! terminated, either to `--out` or to standard output, and maps its
//! outcome to an exit code: [`EXIT_PASS`], [`EXIT_FAIL`] or
//! [`EXIT_CONFIG`].

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use dcaudit_core::audit::AuditKind;
use dcaudit_core::hi::{check_history_independence, impl_by_name, HiVerdict, DEFAULT_BUDGET};
use dcaudit_core::scenario::{Overrides, Scenario};
use serde::Serialize;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Scenarios compiled into the binary, addressable by name.
pub const BUILTIN_SCENARIOS: &[(&str, &str)] = &[
    ("thm1_separation", include_str!("../scenarios/thm1_separation.json")),
    ("counter_weak", include_str!("../scenarios/counter_weak.json")),
    ("counter_replay", include_str!("../scenarios/counter_replay.json")),
    ("board_basic", include_str!("../scenarios/board_basic.json")),
    ("board_flagged", include_str!("../scenarios/board_flagged.json")),
    ("board_random_interleave", include_str!("../scenarios/board_random_interleave.json")),
    ("board_random_interleave_p20", include_str!("../scenarios/board_random_interleave_p20.json")),
    ("board_random_interleave_p80", include_str!("../scenarios/board_random_interleave_p80.json")),
    ("tombstone_negative", include_str!("../scenarios/tombstone_negative.json")),
    ("vault_privacy", include_str!("../scenarios/vault_privacy.json")),
    ("parallel", include_str!("../scenarios/parallel.json")),
    ("sequential", include_str!("../scenarios/sequential.json")),
    ("board_k", include_str!("../scenarios/board_k.json")),
];

pub fn builtin_scenario(name: &str) -> Option<&'static str> {
    BUILTIN_SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

/// Loads a scenario from a file, falling back to a built-in scenario of
/// that name when no such file exists.
pub fn load_scenario(reference: &str) -> Result<Scenario> {
    let path = Path::new(reference);
    if path.exists() {
        return Scenario::load(path).map_err(|e| anyhow!(e));
    }
    let name = reference.strip_prefix("builtin:").unwrap_or(reference);
    match builtin_scenario(name) {
        Some(text) => Scenario::from_json(text).with_context(|| format!("built-in scenario {name}")),
        None => bail!("no scenario file or built-in scenario named {reference:?}"),
    }
}

pub fn render_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = render_json(value)?;
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Reports a configuration problem on standard error and returns the
/// matching exit code.
pub fn config_error(err: &anyhow::Error) -> i32 {
    eprintln!("dcaudit: {err:#}");
    EXIT_CONFIG
}

#[derive(Debug, Clone, Default)]
pub struct RunArgs {
    pub scenario: String,
    pub out: Option<PathBuf>,
    pub overrides: Overrides,
}

pub fn cmd_audit(kind: AuditKind, args: &RunArgs) -> i32 {
    let run = || -> Result<bool> {
        let scenario = load_scenario(&args.scenario)?;
        let report = scenario.run_audit(kind, &args.overrides)?;
        emit(&report, args.out.as_deref())?;
        Ok(report.passed())
    };
    match run() {
        Ok(true) => EXIT_PASS,
        Ok(false) => EXIT_FAIL,
        Err(e) => config_error(&e),
    }
}

pub fn cmd_experiment(name: &str, args: &RunArgs) -> i32 {
    let run = || -> Result<bool> {
        let scenario = load_scenario(&args.scenario)?;
        let report = scenario.run_experiment(name, &args.overrides)?;
        emit(&report, args.out.as_deref())?;
        Ok(report.all_hold)
    };
    match run() {
        Ok(true) => EXIT_PASS,
        Ok(false) => EXIT_FAIL,
        Err(e) => config_error(&e),
    }
}

#[derive(Debug, Serialize)]
struct HiReport<'a> {
    implementation: &'a str,
    universe: Vec<String>,
    max_len: usize,
    #[serde(flatten)]
    verdict: HiVerdict,
}

/// Universe of `n` keys named `k1 .. kn`.
pub fn universe(n: usize) -> Vec<Vec<u8>> {
    (1..=n).map(|i| format!("k{i}").into_bytes()).collect()
}

pub fn cmd_check_hi(implementation: &str, universe_size: usize, max_len: usize, out: Option<&Path>) -> i32 {
    let run = || -> Result<bool> {
        let imp = impl_by_name(implementation).ok_or_else(|| anyhow!("unknown implementation {implementation:?}"))?;
        if universe_size == 0 {
            bail!("universe size must be at least 1");
        }
        let keys = universe(universe_size);
        let verdict = check_history_independence(imp, &keys, max_len, DEFAULT_BUDGET)?;
        let ok = verdict.is_ok();
        let report = HiReport {
            implementation,
            universe: keys.iter().map(|k| String::from_utf8_lossy(k).into_owned()).collect(),
            max_len,
            verdict,
        };
        emit(&report, out)?;
        Ok(ok)
    };
    match run() {
        Ok(true) => EXIT_PASS,
        Ok(false) => EXIT_FAIL,
        Err(e) => config_error(&e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_scenario_validates() {
        for (name, text) in BUILTIN_SCENARIOS {
            let scenario = Scenario::from_json(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(scenario.name, *name);
            assert!(!scenario.witnesses.is_empty(), "{name} names what it witnesses");
        }
    }

    #[test]
    fn builtin_lookup_accepts_prefix() {
        assert!(load_scenario("builtin:board_basic").is_ok());
        assert!(load_scenario("board_basic").is_ok());
        assert!(load_scenario("nonexistent_scenario").is_err());
    }

    #[test]
    fn json_output_is_newline_terminated() {
        assert!(render_json(&serde_json::json!({"a": 1})).unwrap().ends_with("}\n"));
    }
}
