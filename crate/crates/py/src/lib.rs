use pyo3::prelude::*;

#[pymodule]
fn stabrad_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
