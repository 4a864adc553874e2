//! Python bindings. Images cross the boundary as nested lists of floats.

use pyo3::prelude::*;

#[pymodule]
mod dearlab_py {
    use std::path::PathBuf;

    use dearlab::autodiff::Tensor;
    use dearlab::ctsim::{self, FanBeamGeometry};
    use dearlab::lab::{LabConfig, PhantomPreset};
    use dearlab::net::{self, GeneratorSpec, NetworkParams};
    use dearlab::objectives::{evaluate_metrics, SsimParams};
    use dearlab::trainer::generate;
    use ndarray::Array2;
    use pyo3::exceptions::{PyRuntimeError, PyValueError};
    use pyo3::prelude::*;
    use pyo3::types::PyDict;

    fn err(e: dearlab::Error) -> PyErr {
        match &e {
            dearlab::Error::Shape { .. } | dearlab::Error::InvalidGeometry { .. } => {
                PyValueError::new_err(e.to_string())
            }
            _ if e.is_validation() => PyValueError::new_err(e.to_string()),
            _ => PyRuntimeError::new_err(e.to_string()),
        }
    }

    fn to_array(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
        let h = rows.len();
        let w = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != w) {
            return Err(PyValueError::new_err("rows must all have the same length"));
        }
        Array2::from_shape_vec((h, w), rows.into_iter().flatten().collect())
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
        a.outer_iter().map(|r| r.to_vec()).collect()
    }

    fn phantom_preset(name: &str) -> PyResult<PhantomPreset> {
        match name {
            "abdomen" => Ok(PhantomPreset::Abdomen),
            "shepp_logan" => Ok(PhantomPreset::SheppLogan),
            other => Err(PyValueError::new_err(format!(
                "unknown phantom `{other}`; expected abdomen or shepp_logan"
            ))),
        }
    }

    /// Random phantom slice of `n`×`n` attenuation values.
    #[pyfunction]
    #[pyo3(signature = (n, seed, preset = "abdomen"))]
    fn phantom(n: usize, seed: u64, preset: &str) -> PyResult<Vec<Vec<f64>>> {
        let spec = phantom_preset(preset)?.spec();
        ctsim::make_phantom(&spec, n, seed).map(|a| to_rows(&a)).map_err(err)
    }

    #[pyclass(from_py_object)]
    #[derive(Clone)]
    struct Geometry {
        inner: FanBeamGeometry,
    }

    #[pymethods]
    impl Geometry {
        #[new]
        fn new(image_n: usize, n_views: usize, n_detectors: usize) -> PyResult<Self> {
            let inner = FanBeamGeometry::new(image_n, n_views, n_detectors);
            inner.validate().map_err(err)?;
            Ok(Self { inner })
        }

        #[staticmethod]
        fn desk() -> Self {
            Self {
                inner: FanBeamGeometry::desk(),
            }
        }

        #[getter]
        fn image_n(&self) -> usize {
            self.inner.image_n
        }

        #[getter]
        fn n_views(&self) -> usize {
            self.inner.n_views
        }

        #[getter]
        fn n_detectors(&self) -> usize {
            self.inner.n_detectors
        }

        #[getter]
        fn pixel_mm(&self) -> f64 {
            self.inner.pixel_mm
        }

        fn __repr__(&self) -> String {
            format!(
                "Geometry(image_n={}, n_views={}, n_detectors={})",
                self.inner.image_n, self.inner.n_views, self.inner.n_detectors
            )
        }
    }

    #[pyclass]
    struct Sinogram {
        inner: ctsim::Sinogram,
    }

    #[pymethods]
    impl Sinogram {
        /// Line integrals, one row per view.
        #[getter]
        fn data(&self) -> Vec<Vec<f64>> {
            to_rows(&self.inner.data)
        }

        #[getter]
        fn angles(&self) -> Vec<f64> {
            self.inner.angles.clone()
        }

        #[getter]
        fn n_views(&self) -> usize {
            self.inner.n_views()
        }

        /// Keeps `n_keep` evenly spaced views.
        fn subsample(&self, n_keep: usize) -> PyResult<Sinogram> {
            let inner = ctsim::subsample_views(&self.inner, n_keep).map_err(err)?;
            Ok(Sinogram { inner })
        }

        /// Filtered backprojection onto the geometry's image grid.
        fn fbp(&self) -> Vec<Vec<f64>> {
            to_rows(&ctsim::fbp(&self.inner))
        }
    }

    #[pyfunction]
    fn project(image: Vec<Vec<f64>>, geometry: &Geometry) -> PyResult<Sinogram> {
        let img = to_array(image)?;
        let inner = ctsim::forward_project(&img, &geometry.inner).map_err(err)?;
        Ok(Sinogram { inner })
    }

    /// PSNR, SSIM and RMSE of image `x` against reference `y`.
    #[pyfunction]
    #[pyo3(signature = (x, y, data_range = 1.0))]
    fn metrics<'py>(
        py: Python<'py>,
        x: Vec<Vec<f64>>,
        y: Vec<Vec<f64>>,
        data_range: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let (x, y) = (to_array(x)?, to_array(y)?);
        let shape = [1, 1, x.nrows(), x.ncols()];
        let tx = Tensor::new(shape.to_vec(), x.into_raw_vec_and_offset().0).map_err(err)?;
        let shape = [1, 1, y.nrows(), y.ncols()];
        let ty = Tensor::new(shape.to_vec(), y.into_raw_vec_and_offset().0).map_err(err)?;
        let params = SsimParams {
            range: data_range,
            ..SsimParams::default()
        };
        let m = evaluate_metrics(&tx, &ty, &params).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("psnr", m.psnr)?;
        d.set_item("ssim", m.ssim)?;
        d.set_item("rmse", m.rmse)?;
        Ok(d)
    }

    fn preset_spec(preset: &str, filters: Option<usize>) -> PyResult<GeneratorSpec> {
        let mut spec = LabConfig::preset(preset).map_err(err)?.generator;
        if let Some(f) = filters {
            spec.base_filters = f;
            spec.growth_rate = f;
        }
        spec.validate().map_err(err)?;
        Ok(spec)
    }

    /// Trainable scalars in the generator of a preset.
    #[pyfunction]
    #[pyo3(signature = (preset = "dear3d", filters = None))]
    fn count_parameters(preset: &str, filters: Option<usize>) -> PyResult<usize> {
        Ok(net::count_parameters(&preset_spec(preset, filters)?))
    }

    #[pyfunction]
    fn presets() -> Vec<&'static str> {
        dearlab::lab::PRESETS.to_vec()
    }

    #[pyclass]
    struct Generator {
        spec: GeneratorSpec,
        params: NetworkParams<f32>,
    }

    #[pymethods]
    impl Generator {
        /// Freshly initialized generator for `preset`.
        #[new]
        #[pyo3(signature = (preset = "dear3d", seed = 0, filters = None))]
        fn new(preset: &str, seed: u64, filters: Option<usize>) -> PyResult<Self> {
            let spec = preset_spec(preset, filters)?;
            let params = net::build_generator(&spec, seed).map_err(err)?;
            Ok(Self { spec, params })
        }

        /// Loads weights from a checkpoint directory written by training.
        #[staticmethod]
        #[pyo3(signature = (path, preset = "dear3d", filters = None))]
        fn load(path: PathBuf, preset: &str, filters: Option<usize>) -> PyResult<Self> {
            let spec = preset_spec(preset, filters)?;
            let params = dearlab::trainer::load_generator(&path, &spec).map_err(err)?;
            Ok(Self { spec, params })
        }

        #[getter]
        fn n_parameters(&self) -> usize {
            self.params.total_elements()
        }

        #[getter]
        fn min_extent(&self) -> usize {
            self.spec.min_extent()
        }

        /// Maps a stack of slices `[S][H][W]` to a stack of the same shape.
        fn forward(&self, py: Python<'_>, volume: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<Vec<Vec<f64>>>> {
            let s = volume.len();
            let h = volume.first().map_or(0, Vec::len);
            let w = volume.first().and_then(|r| r.first()).map_or(0, Vec::len);
            if volume.iter().any(|sl| sl.len() != h || sl.iter().any(|r| r.len() != w)) {
                return Err(PyValueError::new_err("volume must be rectangular"));
            }
            let shape = match self.spec.rank {
                net::Rank::Two => vec![s, 1, h, w],
                net::Rank::Three => vec![1, 1, s, h, w],
            };
            let data = volume.into_iter().flatten().flatten().map(|v| v as f32).collect();
            let x = Tensor::new(shape, data).map_err(err)?;
            let y = py.detach(|| generate(&self.params, &self.spec, &x)).map_err(err)?;
            Ok(y.data()
                .chunks(h * w)
                .map(|sl| sl.chunks(w).map(|r| r.iter().map(|&v| f64::from(v)).collect()).collect())
                .collect())
        }
    }
}
