//! Browser demo: drag keypoints on a synthetic shape, sweep the landmark
//! prior, and look at farthest point sampling coverage.
//!
//! Build with `wasm-pack build crates/web --target web --out-dir www/pkg`
//! and serve `crates/web/www`.

pub mod scene;

use keydeform::geom::Family;
use wasm_bindgen::prelude::*;

use crate::scene::Scene;

fn js_err(e: keydeform::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn flat(points: &[[f64; 3]]) -> Vec<f64> {
    points.iter().flatten().copied().collect()
}

#[wasm_bindgen]
pub struct Demo {
    scene: Scene,
}

#[wasm_bindgen]
impl Demo {
    /// `family` is `winged`, `table` or `box`.
    #[wasm_bindgen(constructor)]
    pub fn new(family: &str, seed: u32) -> Result<Demo, JsError> {
        let family: Family = family.parse().map_err(js_err)?;
        Ok(Demo {
            scene: Scene::new(family, seed as u64).map_err(js_err)?,
        })
    }

    pub fn faces(&self) -> Vec<u32> {
        self.scene.faces().iter().flatten().map(|&i| i as u32).collect()
    }

    /// Deformed mesh vertices, flattened `xyz`.
    pub fn vertices(&self) -> Result<Vec<f64>, JsError> {
        self.scene.vertices().map(|v| flat(&v)).map_err(js_err)
    }

    pub fn cage(&self) -> Result<Vec<f64>, JsError> {
        self.scene.deformed_cage().map(|v| flat(&v)).map_err(js_err)
    }

    pub fn keypoints(&self) -> Vec<f64> {
        flat(self.scene.keypoints())
    }

    pub fn cloud(&self) -> Vec<f64> {
        flat(self.scene.cloud())
    }

    #[wasm_bindgen(js_name = numBases)]
    pub fn num_bases(&self) -> usize {
        self.scene.num_bases()
    }

    #[wasm_bindgen(js_name = moveKeypoint)]
    pub fn move_keypoint(&mut self, index: usize, x: f64, y: f64, z: f64, sync: bool) -> Result<(), JsError> {
        self.scene.move_keypoint(index, [x, y, z], sync).map_err(js_err)
    }

    /// Prior offsets in standard deviations, one per basis.
    #[wasm_bindgen(js_name = setPrior)]
    pub fn set_prior(&mut self, sigmas: Vec<f64>) -> Result<(), JsError> {
        self.scene.set_prior(&sigmas).map_err(js_err)
    }

    pub fn reset(&mut self) {
        self.scene.reset();
    }

    /// Per-point distance from the surface cloud to its nearest of `j`
    /// farthest point samples.
    #[wasm_bindgen(js_name = fpsHeat)]
    pub fn fps_heat(&self, j: usize) -> Result<Vec<f64>, JsError> {
        self.scene.fps_heat(j).map(|(_, heat)| heat).map_err(js_err)
    }

    #[wasm_bindgen(js_name = fpsIndices)]
    pub fn fps_indices(&self, j: usize) -> Result<Vec<u32>, JsError> {
        self.scene.fps_heat(j).map(|(idx, _)| idx.into_iter().map(|i| i as u32).collect()).map_err(js_err)
    }
}
