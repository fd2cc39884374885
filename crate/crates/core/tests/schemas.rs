use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use mompc::io::{schedule_header, PARETO_HEADER, SERIES_HEADER};
use mompc::moea::CONVERGENCE_HEADER;

fn here(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn golden(name: &str) -> String {
    fs::read_to_string(here("tests/golden").join(name)).unwrap()
}

fn first_line(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    format!("{}\n", text.lines().next().unwrap_or(""))
}

#[test]
fn constants_match_golden_headers() {
    assert_eq!(format!("{}\n", PARETO_HEADER.join(",")), golden("pareto.header"));
    assert_eq!(format!("{}\n", CONVERGENCE_HEADER.join(",")), golden("convergence.header"));
    assert_eq!(format!("{}\n", SERIES_HEADER.join(",")), golden("series.header"));
    let s = mompc::io::load_scenario(&here("data/table2.scenario"), None).unwrap();
    assert_eq!(format!("{}\n", schedule_header(&s).join(",")), golden("schedule.header"));
    assert_eq!(first_line(&here("data/table2_series.csv")), golden("series.header"));
}

#[test]
fn written_files_match_golden_headers() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_mompc"))
        .args(["simulate", "--scenario"])
        .arg(here("data/table2.scenario"))
        .args(["--pop", "8", "--iters", "3", "--horizon", "4", "--laguerre-order", "3", "--error-profile"])
        .arg(here("data/error_profile.toml"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    for forecast in ["perfect", "with_errors"] {
        let run = dir.path().join("proposed/seed_0").join(forecast);
        assert_eq!(first_line(&run.join("schedule.csv")), golden("schedule.header"));
        assert_eq!(first_line(&run.join("convergence.csv")), golden("convergence.header"));
        for slot in 1..=24 {
            assert_eq!(first_line(&run.join(format!("pareto_{slot}.csv"))), golden("pareto.header"));
        }
    }
    // summary keys in order, optional ones present on the with-errors block
    let summary = fs::read_to_string(dir.path().join("summary.toml")).unwrap();
    let block = summary.split("[[run]]").find(|b| b.contains("with_errors")).unwrap();
    let keys: String = block
        .lines()
        .filter_map(|l| l.split_once(" = ").map(|(k, _)| format!("{k}\n")))
        .collect();
    assert_eq!(keys, golden("summary.keys"));
}
