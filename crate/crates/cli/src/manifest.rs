use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "manifest.json";

pub fn gs_name(frame: u32, s: f64) -> String {
    format!("gs_{frame}_{s:07.2}.png")
}

pub fn mask_name(frame: u32, s: f64) -> String {
    format!("mask_{frame}_{s:07.2}.png")
}

pub fn occlusion_name(frame: u32, s: f64) -> String {
    format!("occ_{frame}_{s:07.2}.png")
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SceneInfo {
    pub texture: String,
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub principal: [f64; 2],
    pub gamma: f64,
    pub v: [f64; 3],
    pub omega: [f64; 3],
    pub k: f64,
    pub frames: u32,
    pub plane: [f64; 3],
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GsEntry {
    pub frame: u32,
    pub scanline: f64,
    pub image: String,
    /// Occlusion mask (simulation) or validity mask (inversion).
    pub mask: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SimulationManifest {
    pub scene: SceneInfo,
    pub rs_frames: Vec<String>,
    /// Forward (RS1 to RS2) then backward flow.
    pub flows: Vec<String>,
    pub depths: Vec<String>,
    pub gs_frames: Vec<GsEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct InversionManifest {
    pub rs1: String,
    pub rs2: String,
    pub flow_source: String,
    pub gamma: f64,
    pub model: String,
    pub phi_forward: Option<f64>,
    pub phi_backward: Option<f64>,
    pub estimated_v: Option<[f64; 3]>,
    pub estimated_omega: Option<[f64; 3]>,
    pub outputs: Vec<GsEntry>,
}

pub fn write_json<T: Serialize>(dir: &Path, value: &T) -> anyhow::Result<()> {
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_simulation(dir: &Path) -> anyhow::Result<SimulationManifest> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_sort_by_scanline() {
        assert_eq!(gs_name(1, 3.5), "gs_1_0003.50.png");
        assert_eq!(gs_name(2, 255.0), "gs_2_0255.00.png");
        let mut v = vec![gs_name(1, 100.0), gs_name(1, 20.0), gs_name(1, 3.0)];
        v.sort();
        assert_eq!(v, vec![gs_name(1, 3.0), gs_name(1, 20.0), gs_name(1, 100.0)]);
    }
}
