//! Python bindings: `import pynvp`.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use nvp::codec::{self, CodecSettings, CompressedModel};
use nvp::config::{ModelConfig, Preset, TrainConfig};
use nvp::trainer::{evaluate, init_model, reconstruct, train};
use nvp::video_io::{self, synthetic, PixelMask, VideoTensor};
use nvp::{NvpError, NvpModel, Real};

fn py_err(e: NvpError) -> PyErr {
    match e {
        NvpError::Io { .. } | NvpError::Video { .. } | NvpError::Image { .. } => {
            PyIOError::new_err(e.to_string())
        }
        NvpError::Config(_)
        | NvpError::Shape { .. }
        | NvpError::OutOfRange(..)
        | NvpError::Format { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// RGB video with values in [0, 1], indexed `(frame, y, x)`.
#[pyclass(name = "Video", module = "pynvp")]
struct PyVideo {
    inner: VideoTensor,
}

#[pymethods]
impl PyVideo {
    /// `data` is the flat `frames * height * width * 3` sample list.
    #[new]
    fn new(frames: usize, height: usize, width: usize, data: Vec<Real>) -> PyResult<Self> {
        let inner = VideoTensor::from_vec(frames, height, width, data).map_err(py_err)?;
        Ok(PyVideo { inner })
    }

    /// Frame directory or NVPV file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyVideo {
            inner: video_io::load_video(&path).map_err(py_err)?,
        })
    }

    /// Translating sinusoid over a static textured background.
    #[staticmethod]
    fn structured(frames: usize, height: usize, width: usize) -> Self {
        PyVideo {
            inner: synthetic::structured(frames, height, width),
        }
    }

    #[staticmethod]
    fn constant(frames: usize, height: usize, width: usize, rgb: (Real, Real, Real)) -> Self {
        PyVideo {
            inner: synthetic::constant(frames, height, width, [rgb.0, rgb.1, rgb.2]),
        }
    }

    /// `(video, mask, clean_background)` with a square sweeping across.
    #[staticmethod]
    fn moving_square(frames: usize, height: usize, width: usize) -> (Self, PyMask, Self) {
        let (v, m, c) = synthetic::moving_square(frames, height, width);
        (PyVideo { inner: v }, PyMask { inner: m }, PyVideo { inner: c })
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        self.inner.dims()
    }

    fn pixel(&self, t: usize, y: usize, x: usize) -> PyResult<(Real, Real, Real)> {
        let (f, h, w) = self.inner.dims();
        if t >= f || y >= h || x >= w {
            return Err(PyValueError::new_err(format!("pixel ({t}, {y}, {x}) outside {f}x{h}x{w}")));
        }
        let p = self.inner.pixel(t, y, x);
        Ok((p[0], p[1], p[2]))
    }

    fn to_list(&self) -> Vec<Real> {
        self.inner.as_slice().to_vec()
    }

    /// 8-bit samples, as stored in NVPV.
    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    /// Writes PNG frames, or an NVPV file when `path` ends in `.nvpv`.
    fn save(&self, path: PathBuf) -> PyResult<()> {
        if path.extension().is_some_and(|e| e == "nvpv") {
            video_io::write_nvpv(&self.inner, &path).map_err(py_err)
        } else {
            video_io::save_frames(&self.inner, &path).map_err(py_err)
        }
    }

    fn __repr__(&self) -> String {
        let (t, h, w) = self.inner.dims();
        format!("Video({t}x{h}x{w})")
    }
}

/// Pixels excluded from training (`True` = masked).
#[pyclass(name = "Mask", module = "pynvp")]
struct PyMask {
    inner: PixelMask,
}

#[pymethods]
impl PyMask {
    #[new]
    fn new(frames: usize, height: usize, width: usize, flags: Vec<bool>) -> PyResult<Self> {
        Ok(PyMask {
            inner: PixelMask::new(frames, height, width, flags).map_err(py_err)?,
        })
    }

    /// Directory of 0/255 mask images.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyMask {
            inner: video_io::load_mask(&path).map_err(py_err)?,
        })
    }

    #[getter]
    fn masked_count(&self) -> usize {
        self.inner.masked_count()
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        self.inner.dims()
    }
}

/// A trainable neural video representation.
#[pyclass(name = "Model", module = "pynvp")]
struct PyModel {
    inner: NvpModel,
}

#[pymethods]
impl PyModel {
    /// Desk-scale architecture for the given video size; `config` overrides
    /// individual keys (e.g. `{"hidden": "64"}`).
    #[new]
    #[pyo3(signature = (frames, height, width, preset = "S", seed = 0, config = None))]
    fn new(
        frames: usize,
        height: usize,
        width: usize,
        preset: &str,
        seed: u64,
        config: Option<HashMap<String, String>>,
    ) -> PyResult<Self> {
        let preset: Preset = preset.parse().map_err(py_err)?;
        let mut cfg = ModelConfig::for_video(frames, height, width, preset);
        let mut keys: Vec<_> = config.unwrap_or_default().into_iter().collect();
        keys.sort();
        for (k, v) in keys {
            if !cfg.set(&k, &v).map_err(py_err)? {
                return Err(PyValueError::new_err(format!("unknown config key `{k}`")));
            }
        }
        Ok(PyModel {
            inner: init_model(cfg, seed).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            inner: codec::load_model(&path).map_err(py_err)?.0,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        codec::save_model(&self.inner, &path).map_err(py_err)
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.config.param_count()
    }

    /// The architecture as `key = value` text.
    #[getter]
    fn config(&self) -> String {
        self.inner.config.to_kv()
    }

    /// Trains in place; returns `(iteration, seconds, mse, psnr)` records.
    #[pyo3(signature = (video, iters, seed = 0, lr = None, batch = None, eval_every = 0, workers = 1, mask = None))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        py: Python<'_>,
        video: &PyVideo,
        iters: usize,
        seed: u64,
        lr: Option<Real>,
        batch: Option<usize>,
        eval_every: usize,
        workers: usize,
        mask: Option<&PyMask>,
    ) -> PyResult<Vec<(usize, f64, f64, f64)>> {
        let defaults = TrainConfig::default();
        let tc = TrainConfig {
            total_iters: iters,
            seed,
            lr: lr.unwrap_or(defaults.lr),
            batch_pixels: batch,
            eval_every,
            workers: workers.max(1),
            ..defaults
        };
        let model = &mut self.inner;
        let mask = mask.map(|m| &m.inner);
        let report = py
            .detach(|| train(model, &video.inner, &tc, mask))
            .map_err(py_err)?;
        Ok(report
            .records
            .iter()
            .map(|r| (r.iteration, r.seconds, r.mse, r.psnr))
            .collect())
    }

    /// Mean per-frame PSNR of the unclamped output.
    fn evaluate(&self, video: &PyVideo) -> PyResult<f64> {
        evaluate(&self.inner, &video.inner).map_err(py_err)
    }

    /// Renders (and clamps) on a `frames x height x width` lattice spanning `t_range`.
    #[pyo3(signature = (frames, height, width, t_range = (0.0, 1.0)))]
    fn render(
        &self,
        frames: usize,
        height: usize,
        width: usize,
        t_range: (Real, Real),
    ) -> PyResult<PyVideo> {
        Ok(PyVideo {
            inner: reconstruct(&self.inner, frames, height, width, t_range).map_err(py_err)?,
        })
    }

    /// NVPC bytes; `backend` is `"lossless"`, `"external-S"` or `"external-L"`.
    #[pyo3(signature = (backend = "lossless"))]
    fn compress<'py>(&self, py: Python<'py>, backend: &str) -> PyResult<Bound<'py, PyBytes>> {
        let settings = match backend {
            "lossless" => CodecSettings::lossless(),
            "external-S" => CodecSettings::external(Preset::S),
            "external-L" => CodecSettings::external(Preset::L),
            other => return Err(PyValueError::new_err(format!("unknown backend `{other}`"))),
        };
        let c = codec::compress(&self.inner, &settings).map_err(py_err)?;
        Ok(PyBytes::new(py, &c.to_bytes()))
    }

    #[staticmethod]
    fn decompress(data: &[u8]) -> PyResult<Self> {
        let c = CompressedModel::from_bytes(data).map_err(py_err)?;
        Ok(PyModel {
            inner: codec::decompress(&c).map_err(py_err)?,
        })
    }

    fn export_keyframes(&self, dir: PathBuf) -> PyResult<Vec<PathBuf>> {
        codec::export_keyframes(&self.inner, &dir).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        let c = &self.inner.config;
        format!(
            "Model({}x{}x{}, {} params)",
            c.frames,
            c.height,
            c.width,
            c.param_count()
        )
    }
}

/// Mean per-frame PSNR between two videos of equal size.
#[pyfunction]
fn psnr(recon: &PyVideo, truth: &PyVideo) -> PyResult<f64> {
    nvp::metrics::video_psnr(&recon.inner, &truth.inner).map_err(py_err)
}

/// Bits per pixel of `nbytes` for a `(frames, height, width)` video.
#[pyfunction]
fn bpp(nbytes: usize, dims: (usize, usize, usize)) -> f64 {
    codec::bpp_of_bytes(nbytes, dims)
}

#[pymodule]
fn pynvp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyVideo>()?;
    m.add_class::<PyMask>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(bpp, m)?)?;
    Ok(())
}
