//! Default planar run through every stage, written to ./out.
use ucbeam::cli::{emit_reports, run_pipeline, Format, RunConfig};

fn main() -> ucbeam::Result<()> {
    let cfg = RunConfig::default();
    let out = cfg.out.clone();
    let res = run_pipeline(cfg)?;
    for (c, ok) in res.by_criterion() {
        println!("criterion {c}: {}", if ok { "pass" } else { "fail" });
    }
    for p in emit_reports(&res, &[Format::Json, Format::Csv], &out)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
