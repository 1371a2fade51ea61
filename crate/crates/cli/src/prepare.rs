use anyhow::Result;
use swinct_ct::prepare::{prepare, PrepareOptions, Source};
use swinct_ct::store::{Task, MANIFEST_FILE};

use crate::args::{PrepareArgs, TaskArg};
use crate::config::{default_nodule_prob, default_phantom_size, PrepareConfig};
use crate::exit::UsageError;
use crate::{Globals, Output};

/// Parses `a:b:c` proportions.
pub(crate) fn parse_ratio(s: &str) -> Result<[f64; 3], UsageError> {
    let parts: Vec<f64> = s.split(':').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad_ratio(s))?;
    match parts[..] {
        [a, b, c] if parts.iter().all(|v| v.is_finite() && *v >= 0.0) && a + b + c > 0.0 => {
            let total = a + b + c;
            Ok([a / total, b / total, c / total])
        }
        _ => Err(bad_ratio(s)),
    }
}

fn bad_ratio(s: &str) -> UsageError {
    UsageError::new(format!("--ratio expects three non-negative numbers like 8:1:1, got `{s}`"))
}

pub(crate) fn parse_sizes(s: &str) -> Result<[usize; 3], UsageError> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| UsageError::new(format!("--max-sizes expects three counts like 100,10,10, got `{s}`")))?;
    parts.try_into().map_err(|_| UsageError::new(format!("--max-sizes expects three counts, got `{s}`")))
}

pub(crate) fn run(args: &PrepareArgs, g: &Globals) -> Result<Output> {
    let cfg = g.config.prepare.clone().unwrap_or_default();
    let PrepareConfig { volumes, annotations, phantom, options } = cfg;
    let phantom_source = args.phantom.is_some() || (phantom.is_some() && args.volumes.is_none());
    let mut options = options.unwrap_or_else(|| PrepareOptions {
        // A phantom holds too few negatives to subsample and still meet the ratios.
        negative_fraction: if phantom_source { 1.0 } else { PrepareOptions::default().negative_fraction },
        ..PrepareOptions::default()
    });
    if let Some(t) = args.task {
        options.task = match t {
            TaskArg::Classification => Task::Classification,
            TaskArg::Segmentation => Task::Segmentation,
        };
    }
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = args.$field { options.$field = v; })* };
    }
    set!(image_size, slices_per_axis, negatives_per_volume, expansion, negative_fraction);
    if let Some(r) = &args.ratio {
        options.fractions = Some(parse_ratio(r)?);
    }
    if let Some(s) = &args.max_sizes {
        options.max_sizes = Some(parse_sizes(s)?);
    }
    if args.paper_splits {
        options.leakage_guard = false;
    }

    let volumes = args.volumes.clone().or(volumes);
    let annotations = args.annotations.clone().or(annotations);
    let phantom_count = args.phantom.or(phantom.as_ref().map(|p| p.count));
    let source = match (phantom_count, volumes, annotations) {
        (Some(count), None, None) => Source::Phantom {
            count,
            size: args.phantom_size.or(phantom.as_ref().map(|p| p.size)).unwrap_or_else(default_phantom_size),
            nodule_prob: args.nodule_prob.or(phantom.as_ref().map(|p| p.nodule_prob)).unwrap_or_else(default_nodule_prob),
        },
        (None, Some(volumes), Some(annotations)) => Source::Files { volumes, annotations },
        (Some(_), _, _) => return Err(UsageError::new("--phantom cannot be combined with --volumes/--annotations").into()),
        _ => return Err(UsageError::new("prepare needs --phantom N, or both --volumes and --annotations").into()),
    };
    let out = g.require_out("prepare")?;
    let prepared = prepare(&source, &options, g.seed)?;
    prepared.write(&out)?;

    let r = &prepared.report;
    let json = serde_json::json!({
        "dataset": out,
        "manifest": out.join(MANIFEST_FILE),
        "report": r,
    });
    let line = |name: &str, c: &swinct_ct::store::SplitCounts| {
        let ratio = c.ratio.map_or("-".to_string(), |v| format!("{v:.3}"));
        format!("{name:<5} {:>7} records  {:>7} pos  {:>7} neg  ratio {ratio}  ({} volumes)", c.records, c.positives, c.negatives, c.volumes)
    };
    let text = format!(
        "wrote {}\n{}\n{}\n{}",
        out.display(),
        line("train", &r.train),
        line("val", &r.val),
        line("test", &r.test)
    );
    Ok(Output { json, text })
}
