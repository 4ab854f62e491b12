use crate::error::{Result, ShapeError};
use crate::tensor::Tensor;

/// One training pair on an unstructured point cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSample {
    /// `N × d` point coordinates.
    pub coords: Tensor,
    /// `N × n_a` input field (here a signed distance).
    pub input: Tensor,
    /// `N × n_u` output field.
    pub output: Tensor,
    /// Global parameters.
    pub mu: Vec<f64>,
    /// Which points lie on a body boundary.
    pub surface: Vec<bool>,
}

impl FieldSample {
    pub fn new(
        coords: Tensor,
        input: Tensor,
        output: Tensor,
        mu: Vec<f64>,
        surface: Vec<bool>,
    ) -> Result<Self> {
        let n = coords.rows();
        if !coords.is_matrix() || !input.is_matrix() || !output.is_matrix() {
            return Err(ShapeError::new("sample fields must be matrices").into());
        }
        if input.rows() != n || output.rows() != n || surface.len() != n {
            return Err(ShapeError::new(format!(
                "sample point counts differ: coords {n}, input {}, output {}, mask {}",
                input.rows(),
                output.rows(),
                surface.len()
            ))
            .into());
        }
        Ok(FieldSample {
            coords,
            input,
            output,
            mu,
            surface,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.coords.cols()
    }

    pub fn n_surface(&self) -> usize {
        self.surface.iter().filter(|&&s| s).count()
    }

    /// The points at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> FieldSample {
        let pick = |t: &Tensor| {
            let c = t.cols();
            let data = idx
                .iter()
                .flat_map(|&i| t.row_slice(i).iter().copied())
                .collect();
            Tensor::from_rows(idx.len(), c, data).expect("non-empty selection")
        };
        FieldSample {
            coords: pick(&self.coords),
            input: pick(&self.input),
            output: pick(&self.output),
            mu: self.mu.clone(),
            surface: idx.iter().map(|&i| self.surface[i]).collect(),
        }
    }

    pub fn surface_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.surface[i]).collect()
    }

    /// Every value rounded to the `f32` it is stored as on disk.
    pub fn to_f32_precision(&self) -> FieldSample {
        FieldSample {
            coords: self.coords.to_f32_precision(),
            input: self.input.to_f32_precision(),
            output: self.output.to_f32_precision(),
            mu: self.mu.iter().map(|&x| x as f32 as f64).collect(),
            surface: self.surface.clone(),
        }
    }
}
