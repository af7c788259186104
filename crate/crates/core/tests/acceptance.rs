//! Acceptance suite: thirteen criteria at pinned tolerances, one PASS/FAIL
//! line each. Run with `cargo test -p sparselab --test acceptance`.

use std::time::{Duration, Instant};

use sparselab::experiments::{self, Check, Outcome};

const SEED: u64 = 20240601;

struct Line {
    id: usize,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn pick<'a>(out: &'a Outcome, prefix: &str) -> Vec<&'a Check> {
    out.checks.iter().filter(|c| c.name.starts_with(prefix)).collect()
}

fn from_checks(id: usize, title: &'static str, checks: &[&Check], extra: Option<(bool, String)>) -> Line {
    let mut pass = !checks.is_empty() && checks.iter().all(|c| c.pass);
    let mut parts: Vec<String> = checks.iter().map(|c| format!("{}: {}", c.name, c.detail)).collect();
    if let Some((ok, msg)) = extra {
        pass &= ok;
        parts.push(msg);
    }
    Line { id, title, pass, detail: parts.join("; ") }
}

fn failed(id: usize, title: &'static str, e: sparselab::Error) -> Line {
    Line { id, title, pass: false, detail: format!("error: {e}") }
}

fn main() {
    let mut lines = Vec::new();
    let report = |l: &Line| {
        println!("{} C{:02} {} | {}", if l.pass { "PASS" } else { "FAIL" }, l.id, l.title, l.detail);
    };

    let title = "van der Corput decay";
    let (res, dt) = timed(|| experiments::vdc(&Default::default()));
    let l = match res {
        Ok(o) => from_checks(1, title, &pick(&o, "exponent"), Some((dt.as_secs_f64() < 30.0, format!("runtime {:.1}s", dt.as_secs_f64())))),
        Err(e) => failed(1, title, e),
    };
    report(&l);
    lines.push(l);

    let title = "sublevel shape";
    let l = match experiments::sublevel(&Default::default(), SEED) {
        Ok(o) => from_checks(2, title, &pick(&o, "uniform"), None),
        Err(e) => failed(2, title, e),
    };
    report(&l);
    lines.push(l);

    let (ok, rel, mean) = experiments::kernel_reconstruction(1e-6);
    let l = Line {
        id: 3,
        title: "kernel reconstruction",
        pass: ok,
        detail: format!("relative error {rel:.3e}, worst |mean| {mean:.3e}"),
    };
    report(&l);
    lines.push(l);

    let title = "composed kernel bound";
    let (res, dt) = timed(|| experiments::ttstar(&Default::default()));
    let l = match res {
        Ok(o) => from_checks(4, title, &pick(&o, "c0"), Some((dt.as_secs_f64() < 300.0, format!("runtime {:.1}s", dt.as_secs_f64())))),
        Err(e) => failed(4, title, e),
    };
    report(&l);
    lines.push(l);

    let title5 = "Z-set neighborhoods";
    let title6 = "strip structure";
    match experiments::zset(&Default::default(), SEED) {
        Ok(o) => {
            let mut c5 = pick(&o, "one constant");
            c5.extend(pick(&o, "raster"));
            lines.push(from_checks(5, title5, &c5, None));
            lines.push(from_checks(6, title6, &pick(&o, "strip"), None));
        }
        Err(e) => {
            lines.push(failed(5, title5, e.clone()));
            lines.push(failed(6, title6, e));
        }
    }
    report(&lines[4]);
    report(&lines[5]);

    let title7 = "CZ exactness";
    let title8 = "Carleson packing stability";
    match experiments::czd(&Default::default(), SEED) {
        Ok(o) => {
            lines.push(from_checks(7, title7, &pick(&o, "cz"), None));
            lines.push(from_checks(8, title8, &pick(&o, "packing"), None));
        }
        Err(e) => {
            lines.push(failed(7, title7, e.clone()));
            lines.push(failed(8, title8, e));
        }
    }
    report(&lines[6]);
    report(&lines[7]);

    let title9 = "sparseness witnesses";
    let title10 = "sparse domination shape";
    match experiments::sparse(&Default::default(), SEED) {
        Ok(o) => {
            lines.push(from_checks(9, title9, &pick(&o, "sparse witnesses"), None));
            lines.push(from_checks(10, title10, &pick(&o, "domination"), None));
        }
        Err(e) => {
            lines.push(failed(9, title9, e.clone()));
            lines.push(failed(10, title10, e));
        }
    }
    report(&lines[8]);
    report(&lines[9]);

    let title = "weighted shape";
    let l = match experiments::weights(&Default::default(), SEED) {
        Ok(o) => from_checks(11, title, &o.checks.iter().collect::<Vec<_>>(), None),
        Err(e) => failed(11, title, e),
    };
    report(&l);
    lines.push(l);

    let title = "Rademacher-Menshov";
    let l = match experiments::rm(&Default::default(), SEED) {
        Ok(o) => {
            let mut c = pick(&o, "global");
            c.extend(pick(&o, "orthonormal"));
            from_checks(12, title, &c, None)
        }
        Err(e) => failed(12, title, e),
    };
    report(&l);
    lines.push(l);

    let title = "fixed-scale decay";
    let l = match experiments::simple_scales(&Default::default(), SEED) {
        Ok(o) => from_checks(13, title, &o.checks.iter().collect::<Vec<_>>(), None),
        Err(e) => failed(13, title, e),
    };
    report(&l);
    lines.push(l);

    let passed = lines.iter().filter(|l| l.pass).count();
    println!("acceptance: {passed}/{} criteria passed", lines.len());
    // FAIL lines are informational by default; strict mode turns them into a nonzero exit.
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && passed < lines.len() {
        std::process::exit(1);
    }
}
