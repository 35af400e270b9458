use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use serde::Serialize;
use unroll_core::io;
use unroll_core::metrics::{psnr, ssim};
use unroll_core::Error;

use crate::Status;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MaskUsage {
    With,
    Without,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Directory of predicted `gs_*.png` frames (with optional `mask_*.png`).
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of GT `gs_*.png` frames (with optional `occ_*.png`).
    #[arg(long)]
    pub gt: PathBuf,
    /// Which variant the summary and --min-psnr refer to.
    #[arg(long, value_enum, default_value = "with")]
    pub mask: MaskUsage,
    /// Write the structured report here (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Fail with exit code 1 when the mean PSNR is below this.
    #[arg(long)]
    pub min_psnr: Option<f64>,
}

#[derive(Debug, Serialize)]
struct FrameScore {
    name: String,
    psnr: f64,
    ssim: f64,
    psnr_masked: f64,
    ssim_masked: f64,
    masked_fraction: f64,
}

#[derive(Debug, Serialize)]
struct Report {
    mask: String,
    frames: Vec<FrameScore>,
    mean_psnr: f64,
    mean_ssim: f64,
}

fn frame_names(dir: &Path) -> anyhow::Result<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if name.starts_with("gs_") && name.ends_with(".png") {
            out.insert(name);
        }
    }
    Ok(out)
}

fn optional_mask(path: &Path) -> anyhow::Result<Option<Vec<bool>>> {
    if path.exists() {
        Ok(Some(io::read_mask_png(path)?.2))
    } else {
        Ok(None)
    }
}

pub fn run(args: &EvalArgs) -> anyhow::Result<Status> {
    let pred = frame_names(&args.pred)?;
    let gt = frame_names(&args.gt)?;
    if pred != gt {
        let missing: Vec<_> = gt.difference(&pred).cloned().collect();
        let extra: Vec<_> = pred.difference(&gt).cloned().collect();
        return Err(Error::MismatchedFrameSets(format!("missing {missing:?}, unexpected {extra:?}")).into());
    }
    if pred.is_empty() {
        return Err(Error::MismatchedFrameSets("no gs_*.png frames found".into()).into());
    }
    let mut frames = Vec::new();
    for name in &pred {
        let a = io::read_png(&args.pred.join(name))?;
        let b = io::read_png(&args.gt.join(name))?;
        let valid = optional_mask(&args.pred.join(name.replacen("gs_", "mask_", 1)))?;
        let occluded = optional_mask(&args.gt.join(name.replacen("gs_", "occ_", 1)))?;
        let n = a.width * a.height;
        let mask: Vec<bool> = (0..n)
            .map(|i| valid.as_ref().is_none_or(|v| v[i]) && occluded.as_ref().is_none_or(|o| !o[i]))
            .collect();
        let masked_fraction = mask.iter().filter(|m| **m).count() as f64 / n as f64;
        frames.push(FrameScore {
            name: name.clone(),
            psnr: psnr(&a, &b, None)?,
            ssim: ssim(&a, &b, None)?,
            psnr_masked: psnr(&a, &b, Some(&mask))?,
            ssim_masked: ssim(&a, &b, Some(&mask))?,
            masked_fraction,
        });
    }
    let with_mask = args.mask == MaskUsage::With;
    let pick = |f: &FrameScore| if with_mask { (f.psnr_masked, f.ssim_masked) } else { (f.psnr, f.ssim) };
    let mean_psnr = frames.iter().map(|f| pick(f).0).sum::<f64>() / frames.len() as f64;
    let mean_ssim = frames.iter().map(|f| pick(f).1).sum::<f64>() / frames.len() as f64;

    println!("{:<24} {:>9} {:>8} {:>11} {:>10}", "frame", "PSNR", "SSIM", "PSNR(mask)", "SSIM(mask)");
    for f in &frames {
        println!(
            "{:<24} {:>9.3} {:>8.4} {:>11.3} {:>10.4}",
            f.name, f.psnr, f.ssim, f.psnr_masked, f.ssim_masked
        );
    }
    println!(
        "mean ({} mask): PSNR {mean_psnr:.3} dB, SSIM {mean_ssim:.4}",
        if with_mask { "with" } else { "without" }
    );

    let report = Report {
        mask: if with_mask { "with" } else { "without" }.into(),
        frames,
        mean_psnr,
        mean_ssim,
    };
    if let Some(path) = &args.report {
        std::fs::write(path, serde_json::to_string_pretty(&report)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(match args.min_psnr {
        Some(min) if mean_psnr < min => Status::ValidationFailed,
        _ => Status::Ok,
    })
}
