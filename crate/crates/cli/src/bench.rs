use anyhow::Result;
use swinct_core::bench::bench_attention;

use crate::args::BenchArgs;
use crate::exit::UsageError;
use crate::train::write_json;
use crate::{Globals, Output};

pub const BENCH_CSV: &str = "bench.csv";
pub const BENCH_JSON: &str = "bench.json";

/// Accepted log-log slopes against token count.
pub const WINDOW_SLOPE: (f64, f64) = (0.8, 1.3);
pub const GLOBAL_SLOPE: (f64, f64) = (1.6, 2.3);

fn within((lo, hi): (f64, f64), v: f64) -> bool {
    (lo..=hi).contains(&v)
}

pub(crate) fn run(a: &BenchArgs, g: &Globals) -> Result<Output> {
    if a.sizes.len() < 4 {
        return Err(UsageError::new(format!("--sizes needs at least 4 grid sides for a slope fit, got {}", a.sizes.len())).into());
    }
    let sizes: Vec<(usize, usize)> = a.sizes.iter().map(|&s| (s, s)).collect();
    let report = bench_attention(&sizes, a.dim, a.window, g.seed)?;
    let window_ok = within(WINDOW_SLOPE, report.window_slope);
    let global_ok = within(GLOBAL_SLOPE, report.global_slope);
    let mut json = serde_json::to_value(&report)?;
    json["window_slope_ok"] = window_ok.into();
    json["global_slope_ok"] = global_ok.into();

    if let Some(out) = &g.out {
        std::fs::create_dir_all(out)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["h", "w", "tokens", "global_secs", "window_secs", "flops_msa", "flops_wmsa"])?;
        for p in &report.points {
            w.write_record([
                p.h.to_string(),
                p.w.to_string(),
                p.tokens.to_string(),
                p.global_secs.to_string(),
                p.window_secs.to_string(),
                p.flops_msa.to_string(),
                p.flops_wmsa.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?;
        swinct_tensor::io::write_atomic(&out.join(BENCH_CSV), &bytes)?;
        write_json(&out.join(BENCH_JSON), &json)?;
    }

    let mut text = String::from("tokens  global_s    window_s    MSA FLOPs       W-MSA FLOPs");
    for p in &report.points {
        text.push_str(&format!(
            "\n{:>6}  {:<10.3e}  {:<10.3e}  {:<14}  {}",
            p.tokens, p.global_secs, p.window_secs, p.flops_msa, p.flops_wmsa
        ));
    }
    let verdict = |ok| if ok { "ok" } else { "OUT OF RANGE" };
    text.push_str(&format!(
        "\nwindowed slope {:.3} ({}, expected {}..{})\nglobal slope   {:.3} ({}, expected {}..{})",
        report.window_slope,
        verdict(window_ok),
        WINDOW_SLOPE.0,
        WINDOW_SLOPE.1,
        report.global_slope,
        verdict(global_ok),
        GLOBAL_SLOPE.0,
        GLOBAL_SLOPE.1
    ));
    Ok(Output { json, text })
}
