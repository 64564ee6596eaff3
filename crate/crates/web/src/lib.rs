//! WebAssembly bindings behind `www/index.html`.
//!
//! Three operations are exposed: rendering a procedural object, generating a
//! novel view of it with a generator (untrained unless a checkpoint is
//! loaded), and scoring that view against the true render. The plain-Rust
//! functions in [`demo`] do the work so they can be tested natively.

pub mod demo;

use wasm_bindgen::prelude::*;

use viewsynth::viewnet::ViewNet;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// An RGBA image ready for `ImageData`.
#[wasm_bindgen]
pub struct Image {
    width: u32,
    height: u32,
    rgba: Vec<u8>,
}

#[wasm_bindgen]
impl Image {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }
}

impl From<demo::Rgba> for Image {
    fn from(r: demo::Rgba) -> Self {
        Image {
            width: r.width as u32,
            height: r.height as u32,
            rgba: r.data,
        }
    }
}

/// Renders `class` instance `seed` from the given pose: RGB on the left,
/// depth (near = bright) on the right.
#[wasm_bindgen]
pub fn render(class: &str, seed: u32, pitch: f64, yaw: f64, size: u32) -> Result<Image, JsError> {
    demo::render_pair(class, seed as u64, pitch, yaw, size as usize)
        .map(Image::from)
        .map_err(js_err)
}

/// Accuracy in percent for a mean absolute error on the 0-255 scale.
#[wasm_bindgen]
pub fn accuracy(error: f64) -> Result<f64, JsError> {
    viewsynth::eval::image_accuracy(error).map_err(js_err)
}

/// Generated views next to the ground truth, with their scores.
#[wasm_bindgen]
pub struct Comparison {
    inner: demo::Comparison,
}

#[wasm_bindgen]
impl Comparison {
    /// Generated RGB | generated depth | true RGB | true depth.
    pub fn strip(&self) -> Image {
        self.inner.strip().into()
    }

    #[wasm_bindgen(getter)]
    pub fn error_rgb(&self) -> f64 {
        self.inner.error_rgb
    }

    #[wasm_bindgen(getter)]
    pub fn error_depth(&self) -> f64 {
        self.inner.error_depth
    }

    #[wasm_bindgen(getter)]
    pub fn accuracy_rgb(&self) -> f64 {
        self.inner.accuracy_rgb
    }

    #[wasm_bindgen(getter)]
    pub fn accuracy_depth(&self) -> f64 {
        self.inner.accuracy_depth
    }
}

/// Holds the generator used by [`Generator::generate`].
#[wasm_bindgen]
pub struct Generator {
    net: ViewNet<f32>,
    trained: bool,
}

#[wasm_bindgen]
impl Generator {
    /// Starts with a randomly initialized 64 px network.
    #[wasm_bindgen(constructor)]
    pub fn new() -> Result<Generator, JsError> {
        Ok(Generator {
            net: demo::untrained().map_err(js_err)?,
            trained: false,
        })
    }

    /// Replaces the network with a checkpoint produced by `viewsynth train`.
    pub fn load(&mut self, bytes: &[u8]) -> Result<String, JsError> {
        self.net = demo::load(bytes).map_err(js_err)?;
        self.trained = true;
        Ok(demo::describe(&self.net))
    }

    #[wasm_bindgen(getter)]
    pub fn trained(&self) -> bool {
        self.trained
    }

    #[wasm_bindgen(getter)]
    pub fn input_size(&self) -> u32 {
        self.net.config().input_size as u32
    }

    /// Generates the view `delta_yaw`/`delta_pitch` away from the input pose
    /// and scores it against the true render of that pose.
    #[allow(clippy::too_many_arguments)]
    pub fn generate(
        &self,
        class: &str,
        seed: u32,
        pitch: f64,
        yaw: f64,
        delta_yaw: f64,
        delta_pitch: f64,
    ) -> Result<Comparison, JsError> {
        demo::compare(
            &self.net,
            class,
            seed as u64,
            pitch,
            yaw,
            delta_yaw,
            delta_pitch,
        )
        .map(|inner| Comparison { inner })
        .map_err(js_err)
    }
}
