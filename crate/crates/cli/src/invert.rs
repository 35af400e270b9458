use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use nalgebra::Vector2;
use unroll_core::estimate::{estimate_flow_lk, estimate_motion_ls, estimate_phi, LkParams, PhiSearch};
use unroll_core::io;
use unroll_core::pipeline::{evenly_spaced_scanlines, invert, splat_weights, InversionInputs, Inverter, PropagationModel};
use unroll_core::scene::K_RANGE;
use unroll_core::warp::{HolePolicy, SplatConfig, WeightMode};
use unroll_core::{CameraModel, DepthMap, Direction, Error, FlowField, FlowKind, Image, RsTiming};

use crate::manifest::{self, gs_name, mask_name, write_json, GsEntry, InversionManifest, SimulationManifest};
use crate::Status;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FlowSource {
    /// Ground-truth flows from a simulation directory.
    Gt,
    /// Pyramidal Lucas-Kanade on the RS pair.
    Lk,
    /// `.flo` files given with --flow-fwd / --flow-bwd.
    Files,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DepthSource {
    None,
    /// Depth maps from a simulation directory.
    Gt,
    /// PFM files given with --depth1 / --depth2.
    Files,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Velocity,
    Acceleration,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Weights {
    Uniform,
    InverseDepth,
    Brightness,
}

#[derive(Args, Debug)]
pub struct InvertArgs {
    /// Simulation output directory supplying RS frames, GT flows, depths and references.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub rs1: Option<PathBuf>,
    #[arg(long)]
    pub rs2: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "gt")]
    pub flow: FlowSource,
    #[arg(long)]
    pub flow_fwd: Option<PathBuf>,
    #[arg(long)]
    pub flow_bwd: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "none")]
    pub depth: DepthSource,
    #[arg(long)]
    pub depth1: Option<PathBuf>,
    #[arg(long)]
    pub depth2: Option<PathBuf>,
    /// Readout time ratio in (0, 1].
    #[arg(long)]
    pub gamma: f64,
    /// Focal length in pixels, only used to report the estimated camera motion.
    #[arg(long)]
    pub focal: Option<f64>,
    /// Target scanlines, comma separated. Defaults to the middle scanline.
    #[arg(long, value_delimiter = ',')]
    pub scanlines: Option<Vec<f64>>,
    /// Use this many evenly spaced scanlines over [0, h - 1] instead.
    #[arg(long, conflicts_with = "scanlines")]
    pub scanline_count: Option<usize>,
    #[arg(long, value_enum, default_value = "velocity")]
    pub model: Model,
    /// Acceleration parameter for both directions (overridden by --phi1 / --phi2).
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub phi1: Option<f64>,
    #[arg(long)]
    pub phi2: Option<f64>,
    /// Fit the acceleration parameters against reference GS frames.
    #[arg(long)]
    pub fit: bool,
    /// Scanline of the reference frames used by --fit.
    #[arg(long, default_value_t = 0.0)]
    pub reference_s: f64,
    #[arg(long)]
    pub reference1: Option<PathBuf>,
    #[arg(long)]
    pub reference2: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub weights: Option<Weights>,
    #[arg(long, default_value_t = 10.0)]
    pub sharpness: f64,
    /// Fill holes with the nearest splatted colour (masks still mark them).
    #[arg(long)]
    pub fill_holes: bool,
    #[arg(long)]
    pub out: PathBuf,
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> anyhow::Result<&'a Path> {
    p.as_deref().with_context(|| format!("{what} is required"))
}

fn from_input(input: &Option<PathBuf>, name: &str, what: &str) -> anyhow::Result<PathBuf> {
    let dir = input
        .as_deref()
        .with_context(|| format!("{what} needs --input <simulation dir>"))?;
    Ok(dir.join(name))
}

fn read_flow(path: &Path, direction: Direction) -> anyhow::Result<FlowField> {
    Ok(io::read_flo(path)?.with_kind(FlowKind::OpticalFlow, direction))
}

pub fn run(args: &InvertArgs) -> anyhow::Result<Status> {
    let timing = RsTiming::new(args.gamma)?;
    let sim: Option<SimulationManifest> = args.input.as_deref().map(manifest::read_simulation).transpose()?;

    let rs1_path = match &args.rs1 {
        Some(p) => p.clone(),
        None => from_input(&args.input, "rs_1.png", "--rs1")?,
    };
    let rs2_path = match &args.rs2 {
        Some(p) => p.clone(),
        None => from_input(&args.input, "rs_2.png", "--rs2")?,
    };
    let rs1 = io::read_png(&rs1_path)?;
    let rs2 = io::read_png(&rs2_path)?;
    rs1.check_same_dims(&rs2)?;
    let (w, h) = rs1.dims();

    let (fwd, bwd) = match args.flow {
        FlowSource::Gt => (
            read_flow(&from_input(&args.input, "flow_fwd.flo", "--flow gt")?, Direction::Forward)?,
            read_flow(&from_input(&args.input, "flow_bwd.flo", "--flow gt")?, Direction::Backward)?,
        ),
        FlowSource::Files => (
            read_flow(required(&args.flow_fwd, "--flow-fwd")?, Direction::Forward)?,
            read_flow(required(&args.flow_bwd, "--flow-bwd")?, Direction::Backward)?,
        ),
        FlowSource::Lk => {
            let params = LkParams::default();
            (
                estimate_flow_lk(&rs1, &rs2, &params)?,
                estimate_flow_lk(&rs2, &rs1, &params)?.with_kind(FlowKind::OpticalFlow, Direction::Backward),
            )
        }
    };

    let (depth1, depth2): (Option<DepthMap>, Option<DepthMap>) = match args.depth {
        DepthSource::None => (None, None),
        DepthSource::Gt => (
            Some(io::read_pfm(&from_input(&args.input, "depth_1.pfm", "--depth gt")?)?),
            Some(io::read_pfm(&from_input(&args.input, "depth_2.pfm", "--depth gt")?)?),
        ),
        DepthSource::Files => (
            Some(io::read_pfm(required(&args.depth1, "--depth1")?)?),
            Some(io::read_pfm(required(&args.depth2, "--depth2")?)?),
        ),
    };

    let focal = args.focal.or(sim.as_ref().map(|m| m.scene.focal));
    let principal = sim
        .as_ref()
        .map(|m| Vector2::new(m.scene.principal[0], m.scene.principal[1]))
        .unwrap_or_else(|| Vector2::new((w / 2) as f64, (h / 2) as f64));
    // The inversion itself only depends on h and gamma; the focal length
    // matters for motion estimation alone.
    let camera = CameraModel::new(focal.unwrap_or(w as f64), principal, w, h)?;

    let scanlines = match (&args.scanlines, args.scanline_count) {
        (Some(list), _) => list.clone(),
        (None, Some(n)) => evenly_spaced_scanlines(&camera, n),
        (None, None) => vec![camera.middle_scanline()],
    };

    let inverter = Inverter::new(camera, timing, fwd.clone(), bwd.clone())?;
    let splat = SplatConfig {
        weight_mode: match args.weights {
            Some(Weights::Uniform) => WeightMode::Uniform,
            Some(Weights::Brightness) => WeightMode::Brightness,
            Some(Weights::InverseDepth) | None => WeightMode::InverseDepth,
        },
        sharpness: args.sharpness,
        hole_policy: if args.fill_holes {
            HolePolicy::NearestFill
        } else {
            HolePolicy::MarkInvalid
        },
    };
    splat.validate()?;

    let model = match args.model {
        Model::Velocity => PropagationModel::Velocity,
        Model::Acceleration if args.fit => {
            let s = args.reference_s;
            let ref1 = reference(&args.reference1, &args.input, 1, s)?;
            let ref2 = reference(&args.reference2, &args.input, 2, s)?;
            let (f1, f2) = estimate_phi(
                &rs1,
                &rs2,
                inverter.middle_flow(Direction::Forward),
                inverter.middle_flow(Direction::Backward),
                &camera,
                s,
                &ref1,
                &ref2,
                &splat,
                &PhiSearch::default(),
            )?;
            for (name, fit) in [("phi1", f1), ("phi2", f2)] {
                if fit.non_improving {
                    eprintln!("warning: {name} = {:.4} does not improve on constant velocity", fit.phi);
                }
            }
            PropagationModel::Acceleration {
                phi_forward: f1.phi,
                phi_backward: f2.phi,
            }
        }
        Model::Acceleration => {
            let phi1 = args.phi1.or(args.phi).unwrap_or(0.0);
            let phi2 = args.phi2.or(args.phi).unwrap_or(0.0);
            for phi in [phi1, phi2] {
                // phi = k * gamma; keep k inside its accepted range.
                let k = phi / args.gamma;
                if !(K_RANGE.0..=K_RANGE.1).contains(&k) {
                    bail!("phi {phi} gives k = {k} outside [{}, {}]", K_RANGE.0, K_RANGE.1);
                }
            }
            PropagationModel::Acceleration {
                phi_forward: phi1,
                phi_backward: phi2,
            }
        }
    };

    let w1 = splat_weights(splat.weight_mode, depth1.as_ref(), &rs1, &rs2, &fwd)?;
    let w2 = splat_weights(splat.weight_mode, depth2.as_ref(), &rs2, &rs1, &bwd)?;
    let inputs = InversionInputs {
        rs1: &rs1,
        rs2: &rs2,
        weights1: w1.as_deref(),
        weights2: w2.as_deref(),
    };
    let pairs = invert(&inverter, &inputs, &scanlines, model, &splat)?;

    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut outputs = Vec::new();
    for pair in &pairs {
        for (frame, gs) in [(1, &pair.forward), (2, &pair.backward)] {
            let image = gs_name(frame, pair.s);
            let mask = mask_name(frame, pair.s);
            io::write_png(&args.out.join(&image), &gs.image)?;
            io::write_mask_png(&args.out.join(&mask), w, h, &gs.valid)?;
            outputs.push(GsEntry {
                frame,
                scanline: pair.s,
                image,
                mask,
            });
        }
    }

    let motion = match (&depth1, focal) {
        (Some(d), Some(_)) => estimate_motion_ls(&fwd, d, &camera, &timing).ok(),
        _ => None,
    };
    let (phi_forward, phi_backward) = match model {
        PropagationModel::Velocity => (None, None),
        PropagationModel::Acceleration {
            phi_forward,
            phi_backward,
        } => (Some(phi_forward), Some(phi_backward)),
    };
    let manifest = InversionManifest {
        rs1: rs1_path.display().to_string(),
        rs2: rs2_path.display().to_string(),
        flow_source: format!("{:?}", args.flow).to_lowercase(),
        gamma: args.gamma,
        model: format!("{:?}", args.model).to_lowercase(),
        phi_forward,
        phi_backward,
        estimated_v: motion.as_ref().map(|m| m.v.into()),
        estimated_omega: motion.as_ref().map(|m| m.omega.into()),
        outputs,
    };
    write_json(&args.out, &manifest)?;
    println!("wrote {} GS frame pairs to {}", pairs.len(), args.out.display());
    Ok(Status::Ok)
}

/// Reference GS frame for fitting: an explicit path, or the simulator's GT
/// frame at `s` from the input directory.
fn reference(explicit: &Option<PathBuf>, input: &Option<PathBuf>, frame: u32, s: f64) -> anyhow::Result<Image> {
    let path = match (explicit, input) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) if dir.join(gs_name(frame, s)).exists() => dir.join(gs_name(frame, s)),
        _ => return Err(Error::MissingReference.into()),
    };
    Ok(io::read_png(&path)?)
}
