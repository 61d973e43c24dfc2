//! Browser bindings for a one-dimensional magnetization playground.
//!
//! Built for `wasm32-unknown-unknown` with wasm-bindgen, the [`Demo`] type
//! is the whole JavaScript surface: construct one, call `advance` from the
//! animation loop, and read `magnetization` back into a canvas. The page
//! that drives it lives in `www/index.html`. The crate also compiles on
//! native targets, which keeps the driver logic under the ordinary test
//! suite.

pub mod driver;

use wasm_bindgen::prelude::*;

/// A live simulation owned by the page.
#[wasm_bindgen]
pub struct Demo {
    inner: driver::Demo,
}

#[wasm_bindgen]
impl Demo {
    /// Starts a fresh run. `preset` is `relax`, `precess`, or `wall`;
    /// `modes` is the Galerkin truncation order in `4..=96`; `epsilon` is
    /// the diffusive regularization strength in `(0, 1]`.
    #[wasm_bindgen(constructor)]
    pub fn new(preset: &str, modes: u32, epsilon: f64) -> Result<Demo, JsError> {
        driver::Demo::new(preset, modes as usize, epsilon)
            .map(|inner| Demo { inner })
            .map_err(|e| JsError::new(&e))
    }

    /// Advances the flow by `n` steps; throws when a step is rejected.
    pub fn advance(&mut self, n: u32) -> Result<(), JsError> {
        self.inner.advance(n as usize).map_err(|e| JsError::new(&e))
    }

    /// Sample coordinates in `[0, 1]`, one per grid point.
    pub fn positions(&self) -> Vec<f64> {
        self.inner.positions()
    }

    /// Interleaved `u1, u2, u3` samples matching `positions`.
    pub fn magnetization(&self) -> Vec<f64> {
        self.inner.magnetization()
    }

    /// Scalar diagnostics of the current state as a JSON object string.
    #[wasm_bindgen(js_name = statsJson)]
    pub fn stats_json(&self) -> Result<String, JsError> {
        let stats = self.inner.stats().map_err(|e| JsError::new(&e))?;
        serde_json::to_string(&stats).map_err(|e| JsError::new(&e.to_string()))
    }

    /// The fixed step size chosen from the stability probe at reset.
    pub fn dt(&self) -> f64 {
        self.inner.dt()
    }
}
