//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! A FAIL is a measured result and leaves the exit status at 0; only an
//! experiment that could not be carried out (ERROR) fails the target.

use std::process::ExitCode;

use conic_flow_cli::suite::{run_suite, SuiteOptions, Verdict};

fn main() -> ExitCode {
    let out = tempfile::tempdir().expect("temporary run directory");
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let opts = SuiteOptions {
        out: out.path().to_path_buf(),
        threads,
        force: false,
    };
    let results = run_suite(&opts, &mut |r| println!("{r}"));
    let count = |v: Verdict| results.iter().filter(|r| r.verdict == v).count();
    println!(
        "acceptance: {} passed, {} failed, {} errors",
        count(Verdict::Pass),
        count(Verdict::Fail),
        count(Verdict::Error)
    );
    if count(Verdict::Error) > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
