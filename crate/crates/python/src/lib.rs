use pyo3::prelude::*;

#[pymodule]
fn ptisabb_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
