//! Python bindings: EIA containers, synthetic scenes, encode, decode and
//! quality metrics.

use emr4d_core::color::{eia_from_rgb, yuv_to_rgb};
use emr4d_core::geometry::{CodecConfig, EiaGrid, Profile};
use emr4d_core::image_io::{eia_to_image, read_eia, read_rgb, write_eia};
use emr4d_core::lfbr::SynthesisOptions;
use emr4d_core::pipeline::{self, DecodeOptions, EncodeOutput};
use emr4d_core::quality::{render_central_view, QualityReport};
use emr4d_core::synth::{generate, SceneSpec, TextureKind};
use emr4d_core::Error;
use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

create_exception!(emr4d, CodecError, PyValueError, "Malformed or damaged bitstream.");

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        e if e.is_payload() || matches!(e, Error::Container(_)) => CodecError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

/// An elemental image array in YUV.
#[pyclass(name = "Eia", module = "emr4d", frozen)]
struct PyEia {
    inner: EiaGrid,
}

#[pymethods]
impl PyEia {
    /// Splits interleaved 8-bit RGB into `ei_size` square EIs.
    #[staticmethod]
    fn from_rgb(data: &[u8], width: usize, height: usize, ei_size: usize) -> PyResult<Self> {
        if ei_size == 0 || !width.is_multiple_of(ei_size) || !height.is_multiple_of(ei_size) {
            return Err(PyValueError::new_err(format!("{width}x{height} is not a whole number of {ei_size}-px EIs")));
        }
        let inner = eia_from_rgb(width, height, data, height / ei_size, width / ei_size, ei_size).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, ei_size = 75))]
    fn read(path: &str, ei_size: usize) -> PyResult<Self> {
        let img = read_rgb(path).map_err(to_py)?;
        if ei_size == 0 || !img.width.is_multiple_of(ei_size) || !img.height.is_multiple_of(ei_size) {
            return Err(PyValueError::new_err(format!("{}x{} is not a whole number of {ei_size}-px EIs", img.width, img.height)));
        }
        let inner = read_eia(path, img.height / ei_size, img.width / ei_size, ei_size).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        write_eia(path, &self.inner).map_err(to_py)
    }

    /// `(width, height, rgb_bytes)`.
    fn to_rgb<'py>(&self, py: Python<'py>) -> PyResult<(usize, usize, Bound<'py, PyBytes>)> {
        let img = eia_to_image(&self.inner).map_err(to_py)?;
        Ok((img.width, img.height, PyBytes::new(py, &img.data)))
    }

    /// Central view as `(width, height, rgb_bytes)`.
    fn render<'py>(&self, py: Python<'py>) -> PyResult<(usize, usize, Bound<'py, PyBytes>)> {
        let view = render_central_view(&self.inner).map_err(to_py)?;
        let rgb = yuv_to_rgb(&view).map_err(to_py)?;
        Ok((view[0].width, view[0].height, PyBytes::new(py, &rgb)))
    }

    #[getter]
    fn ei_rows(&self) -> usize {
        self.inner.ei_rows
    }

    #[getter]
    fn ei_cols(&self) -> usize {
        self.inner.ei_cols
    }

    #[getter]
    fn ei_size(&self) -> usize {
        self.inner.ei_size
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Eia({}x{} EIs of {} px)", self.inner.ei_rows, self.inner.ei_cols, self.inner.ei_size)
    }
}

/// Result of `encode`.
#[pyclass(name = "Encoded", module = "emr4d", frozen)]
struct PyEncoded {
    out: EncodeOutput,
}

#[pymethods]
impl PyEncoded {
    #[getter]
    fn data<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.out.bytes)
    }

    #[getter]
    fn bpp(&self) -> f64 {
        self.out.stats.bpp
    }

    /// Encoder statistics as JSON.
    fn stats_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.out.stats).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Key-EIA as the decoder will synthesize it.
    fn key_reconstruction(&self) -> PyEia {
        PyEia { inner: self.out.key_reconstruction.clone() }
    }

    fn __len__(&self) -> usize {
        self.out.bytes.len()
    }
}

#[pyclass(name = "Quality", module = "emr4d", frozen, get_all)]
struct PyQuality {
    psnr_db: f64,
    ssim: f64,
    mse: [f64; 3],
    channel_ssim: [f64; 3],
    bpp: Option<f64>,
    json: String,
}

#[pymethods]
impl PyQuality {
    fn __repr__(&self) -> String {
        self.json.clone()
    }
}

#[pyfunction]
#[pyo3(signature = (rows = 8, cols = 8, *, ei_size = 75, texture = "noise", parallax_x = 4, parallax_y = 4, seed = 0, shadow = true))]
#[allow(clippy::too_many_arguments)]
fn synth(rows: usize, cols: usize, ei_size: usize, texture: &str, parallax_x: usize, parallax_y: usize, seed: u64, shadow: bool) -> PyResult<PyEia> {
    let kind = TextureKind::parse(texture).ok_or_else(|| PyValueError::new_err(format!("unknown texture {texture:?}")))?;
    let mut spec = SceneSpec::new(kind, rows, cols);
    spec.ei_size = ei_size;
    spec.parallax_x = parallax_x;
    spec.parallax_y = parallax_y;
    spec.seed = seed;
    if !shadow {
        spec.shadow = Default::default();
    }
    Ok(PyEia { inner: generate(&spec).map_err(to_py)?.grid })
}

#[pyfunction]
#[pyo3(signature = (eia, *, profile = None, lambda_ = None, interval = None, gop = None, seed = None))]
fn encode(py: Python<'_>, eia: &PyEia, profile: Option<&str>, lambda_: Option<f64>, interval: Option<usize>, gop: Option<usize>, seed: Option<u64>) -> PyResult<PyEncoded> {
    let mut cfg = match profile {
        Some(name) => Profile::parse(name).ok_or_else(|| PyValueError::new_err(format!("unknown profile {name:?}")))?.config(),
        None => CodecConfig::default(),
    };
    if let Some(l) = lambda_ {
        if profile.is_some() {
            return Err(PyValueError::new_err("profile and lambda_ are exclusive"));
        }
        cfg.lambda = l;
    }
    if let Some(i) = interval {
        cfg.interval = i;
    }
    if let Some(g) = gop {
        cfg.gop = g;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.chroma_size = eia.inner.ei_size.div_ceil(2);
    let out = py.allow_threads(|| pipeline::encode(&eia.inner, &cfg)).map_err(to_py)?;
    Ok(PyEncoded { out })
}

#[pyfunction]
#[pyo3(signature = (data, *, postfilter = true))]
fn decode(py: Python<'_>, data: &[u8], postfilter: bool) -> PyResult<PyEia> {
    let mut opts = DecodeOptions::default();
    if !postfilter {
        opts.synthesis = SynthesisOptions { postfilter: None, ..SynthesisOptions::default() };
    }
    let out = py.allow_threads(|| pipeline::decode(data, &opts)).map_err(to_py)?;
    Ok(PyEia { inner: out.eia })
}

#[pyfunction]
#[pyo3(signature = (reference, decoded, bits = None))]
fn metrics(reference: &PyEia, decoded: &PyEia, bits: Option<u64>) -> PyResult<PyQuality> {
    let r = QualityReport::compute(&reference.inner, &decoded.inner, bits).map_err(to_py)?;
    let json = r.to_json_line().map_err(to_py)?;
    Ok(PyQuality { psnr_db: r.psnr_db, ssim: r.ssim, mse: r.mse, channel_ssim: r.channel_ssim, bpp: r.bpp, json })
}

#[pymodule]
fn emr4d(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEia>()?;
    m.add_class::<PyEncoded>()?;
    m.add_class::<PyQuality>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add("CodecError", m.py().get_type::<CodecError>())?;
    m.add("PROFILES", Profile::ALL.map(Profile::name).to_vec())?;
    Ok(())
}
