//! One module per experiment kind. Each returns the checks it declared, the
//! errors of cells that aborted, and per-cell timings.

pub mod tabular;
pub mod theory;
pub mod toy;

use crate::manifest::{CellTiming, Check};

#[derive(Debug, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub errors: Vec<String>,
    pub cells: Vec<CellTiming>,
}

impl Outcome {
    pub(crate) fn absorb_cell<T>(&mut self, cell: &str, seconds: f64, result: crate::Result<T>) -> Option<T> {
        self.cells.push(CellTiming {
            cell: cell.to_string(),
            seconds,
        });
        match result {
            Ok(v) => Some(v),
            Err(e) => {
                self.errors.push(format!("{cell}: {e}"));
                None
            }
        }
    }
}

/// Method label: `baseline` for `k = ∞`, otherwise `qed_k{k}`.
pub fn method_name(k: f64) -> String {
    if k.is_infinite() {
        "baseline".to_string()
    } else {
        format!("qed_k{k}")
    }
}

/// Inverse of [`method_name`]; `None` for labels that are not QED methods.
pub fn method_k(method: &str) -> Option<f64> {
    if method == "baseline" {
        return Some(f64::INFINITY);
    }
    method.strip_prefix("qed_k")?.parse().ok()
}

/// Fixed-temperature toy method label.
pub fn alpha_method_name(alpha: f64) -> String {
    format!("alpha{alpha}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for k in [0.1, 0.2, 0.4, 0.8, 1.0, f64::INFINITY] {
            assert_eq!(method_k(&method_name(k)), Some(k));
        }
        assert_eq!(method_name(0.2), "qed_k0.2");
        assert_eq!(method_k("alpha0.1"), None);
    }
}
