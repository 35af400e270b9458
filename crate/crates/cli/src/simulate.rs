use std::path::Path;

use anyhow::Context;
use rayon::prelude::*;
use unroll_core::io;
use unroll_core::pipeline::evenly_spaced_scanlines;
use unroll_core::scene::SceneConfig;

use crate::manifest::{gs_name, occlusion_name, write_json, GsEntry, SceneInfo, SimulationManifest};
use crate::Status;

pub fn run(config: &Path, out: &Path, scanlines: Option<Vec<f64>>, count: Option<usize>) -> anyhow::Result<Status> {
    let cfg = SceneConfig::load(config)?;
    let scene = cfg.build(config.parent())?;
    let cam = scene.camera;
    let scanlines = match (scanlines, count) {
        (Some(list), _) => list,
        (None, Some(n)) => evenly_spaced_scanlines(&cam, n),
        (None, None) => vec![0.0, cam.middle_scanline()],
    };
    for &s in &scanlines {
        anyhow::ensure!((0.0..=cam.h() - 1.0).contains(&s), "scanline {s} outside [0, {}]", cam.h() - 1.0);
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let mut rs_frames = Vec::new();
    let mut depths = Vec::new();
    for frame in 1..=scene.frame_count {
        let rs = scene.compose_rs(frame)?;
        let name = format!("rs_{frame}.png");
        io::write_png(&out.join(&name), &rs.image)?;
        rs_frames.push(name);
        let dname = format!("depth_{frame}.pfm");
        io::write_pfm(&out.join(&dname), &rs.depth)?;
        depths.push(dname);
    }

    let (fwd, bwd) = scene.gt_optical_flow()?;
    io::write_flo(&out.join("flow_fwd.flo"), &fwd)?;
    io::write_flo(&out.join("flow_bwd.flo"), &bwd)?;

    let jobs: Vec<(u32, f64)> = [1, 2].iter().flat_map(|&f| scanlines.iter().map(move |&s| (f, s))).collect();
    let gs_frames = jobs
        .par_iter()
        .map(|&(frame, s)| -> anyhow::Result<GsEntry> {
            let gs = scene.render_gs(frame, s)?;
            let image = gs_name(frame, s);
            let mask = occlusion_name(frame, s);
            io::write_png(&out.join(&image), &gs.image)?;
            io::write_mask_png(&out.join(&mask), cam.width, cam.height, &scene.gt_occlusion(frame, s))?;
            Ok(GsEntry {
                frame,
                scanline: s,
                image,
                mask,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let manifest = SimulationManifest {
        scene: SceneInfo {
            texture: cfg.texture.clone(),
            width: cam.width,
            height: cam.height,
            focal: cam.focal_length,
            principal: [cam.principal_point.x, cam.principal_point.y],
            gamma: scene.timing.gamma(),
            v: scene.motion.v.into(),
            omega: scene.motion.omega.into(),
            k: scene.motion.k,
            frames: scene.frame_count,
            plane: [scene.plane.z0, scene.plane.dz_dx, scene.plane.dz_dy],
        },
        rs_frames,
        flows: vec!["flow_fwd.flo".into(), "flow_bwd.flo".into()],
        depths,
        gs_frames,
    };
    write_json(out, &manifest)?;
    println!(
        "wrote {} RS frames, 2 flows and {} GT GS frames to {}",
        manifest.rs_frames.len(),
        manifest.gs_frames.len(),
        out.display()
    );
    Ok(Status::Ok)
}
