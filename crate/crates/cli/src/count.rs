use anyhow::Result;
use serde::Serialize;
use swinct_core::complexity::{count_model, flops_msa, flops_wmsa, ComplexityReport};
use swinct_core::heads::HeadConfig;
use swinct_core::swin::SwinConfig;

use crate::args::{CountArgs, HeadArg};
use crate::train::write_json;
use crate::{Globals, Output};

/// Closed-form attention cost of one block of a stage.
#[derive(Debug, Clone, Serialize)]
pub struct StageAttention {
    pub stage: usize,
    pub h: usize,
    pub w: usize,
    pub dim: usize,
    pub window: usize,
    /// `4hwC² + 2(hw)²C` for global attention on the stage grid.
    pub msa_flops: u64,
    /// `4hwC² + 2M²hwC` on the window-padded grid.
    pub wmsa_flops: u64,
    /// How many times cheaper windowed attention is.
    pub saving: f64,
}

#[derive(Debug, Clone, Serialize)]
struct CountOutput {
    #[serde(flatten)]
    report: ComplexityReport,
    head: &'static str,
    num_classes: usize,
    /// Share of all FLOPs spent on attention-matrix products.
    attention_share: f64,
    stages: Vec<StageAttention>,
}

pub(crate) fn stage_attention(cfg: &SwinConfig) -> Result<Vec<StageAttention>> {
    (0..4)
        .map(|i| {
            let g = cfg.stage_geometry(i);
            let dim = cfg.stage_dim(i);
            let msa = flops_msa(g.h as u64, g.w as u64, dim as u64)?;
            let wmsa = flops_wmsa(g.padded_h as u64, g.padded_w as u64, dim as u64, g.window as u64)?;
            Ok(StageAttention {
                stage: i,
                h: g.h,
                w: g.w,
                dim,
                window: g.window,
                msa_flops: msa,
                wmsa_flops: wmsa,
                saving: msa as f64 / wmsa as f64,
            })
        })
        .collect()
}

pub(crate) fn run(a: &CountArgs, g: &Globals) -> Result<Output> {
    let mut cfg = SwinConfig::variant(&a.variant, a.res)?;
    if let Some(m) = a.window {
        cfg.window_size = m;
        cfg.validate()?;
    }
    let (head, name) = match a.head {
        HeadArg::Classifier => (HeadConfig::Classifier { num_classes: a.classes.unwrap_or(1000) }, "classifier"),
        HeadArg::Segmentation => (
            HeadConfig::Segmentation { num_classes: a.classes.unwrap_or(150), decoder_dim: a.decoder_dim },
            "segmentation",
        ),
    };
    let report = count_model(&cfg, &head, a.res)?;
    let stages = stage_attention(&cfg)?;
    let out = CountOutput {
        attention_share: report.attention_flops as f64 / report.flops as f64,
        num_classes: head.num_classes(),
        head: name,
        stages,
        report,
    };
    let mut text = format!(
        "{} at {}x{} ({name}, {} classes): {:.2}M params, {:.2}G FLOPs, attention {:.1}%",
        out.report.variant,
        a.res,
        a.res,
        out.num_classes,
        out.report.params as f64 / 1e6,
        out.report.flops as f64 / 1e9,
        100.0 * out.attention_share
    );
    for s in &out.stages {
        text.push_str(&format!(
            "\n  stage {} {}x{} C={} M={}: MSA {} vs W-MSA {} ({:.1}x)",
            s.stage, s.h, s.w, s.dim, s.window, s.msa_flops, s.wmsa_flops, s.saving
        ));
    }
    let json = serde_json::to_value(&out)?;
    if let Some(path) = &g.out {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        write_json(path, &json)?;
    }
    Ok(Output { json, text })
}
