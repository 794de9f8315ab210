//! Discrete memoryless channels as row-stochastic matrices.

use serde::{Deserialize, Serialize};

use crate::measures::{Distribution, MeasureError};

const ROW_SUM_SLACK: f64 = 1e-9;

/// `W(y|x)`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Channel {
    nx: usize,
    ny: usize,
    data: Vec<f64>,
}

impl Channel {
    /// Rows must be nonnegative and sum to one (up to `1e-9`). Rows off by
    /// more than rounding are renormalized.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, MeasureError> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(MeasureError::Empty);
        }
        let ny = rows[0].len();
        let nx = rows.len();
        let mut data = Vec::with_capacity(nx * ny);
        for (x, row) in rows.iter().enumerate() {
            if row.len() != ny {
                return Err(MeasureError::AlphabetMismatch {
                    left: ny,
                    right: row.len(),
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_SLACK || row.iter().any(|v| !(*v >= 0.0)) {
                return Err(MeasureError::NotStochastic { row: x, sum });
            }
            if (sum - 1.0).abs() <= 1e-12 {
                data.extend_from_slice(row);
            } else {
                data.extend(row.iter().map(|v| v / sum));
            }
        }
        Ok(Channel { nx, ny, data })
    }

    pub fn from_distributions(rows: &[Distribution]) -> Result<Self, MeasureError> {
        Channel::new(rows.iter().map(|d| d.probs().to_vec()).collect())
    }

    /// Binary symmetric channel with crossover `p`.
    pub fn bsc(p: f64) -> Result<Self, MeasureError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(MeasureError::InvalidEntry { index: 0, value: p });
        }
        Channel::new(vec![vec![1.0 - p, p], vec![p, 1.0 - p]])
    }

    /// Binary erasure channel; outputs are `0, 1, e`.
    pub fn bec(eps: f64) -> Result<Self, MeasureError> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(MeasureError::InvalidEntry { index: 0, value: eps });
        }
        Channel::new(vec![vec![1.0 - eps, 0.0, eps], vec![0.0, 1.0 - eps, eps]])
    }

    pub fn identity(k: usize) -> Self {
        let mut data = vec![0.0; k * k];
        for i in 0..k {
            data[i * k + i] = 1.0;
        }
        Channel { nx: k, ny: k, data }
    }

    /// Every row equal to `q`.
    pub fn constant(q: &Distribution, inputs: usize) -> Self {
        let mut data = Vec::with_capacity(inputs * q.len());
        for _ in 0..inputs {
            data.extend_from_slice(q.probs());
        }
        Channel {
            nx: inputs,
            ny: q.len(),
            data,
        }
    }

    /// Whitespace-separated rows, one input symbol per line. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn parse_matrix(text: &str) -> Result<Self, MeasureError> {
        let mut rows = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
            let row = row.map_err(|_| MeasureError::InvalidEntry {
                index: rows.len(),
                value: f64::NAN,
            })?;
            rows.push(row);
        }
        Channel::new(rows)
    }

    /// Presets: `bsc:p`, `bec:e`, `identity:k`, `constant:k`.
    pub fn from_preset(preset: &str) -> Result<Self, MeasureError> {
        let (name, arg) = preset.split_once(':').unwrap_or((preset, ""));
        let bad = || MeasureError::Preset(preset.to_string());
        match name.trim().to_ascii_lowercase().as_str() {
            "bsc" => Channel::bsc(arg.trim().parse().map_err(|_| bad())?),
            "bec" => Channel::bec(arg.trim().parse().map_err(|_| bad())?),
            "identity" | "id" => {
                let k: usize = arg.trim().parse().map_err(|_| bad())?;
                if k == 0 {
                    return Err(MeasureError::Empty);
                }
                Ok(Channel::identity(k))
            }
            "constant" => {
                let k: usize = arg.trim().parse().map_err(|_| bad())?;
                if k == 0 {
                    return Err(MeasureError::Empty);
                }
                Ok(Channel::constant(&Distribution::uniform(k), k))
            }
            _ => Err(bad()),
        }
    }

    pub fn input_size(&self) -> usize {
        self.nx
    }

    pub fn output_size(&self) -> usize {
        self.ny
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.data[x * self.ny..(x + 1) * self.ny]
    }

    pub fn row_distribution(&self, x: usize) -> Distribution {
        Distribution::new(self.row(x).to_vec()).expect("rows are stochastic")
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[x * self.ny + y]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.nx).map(|x| self.row(x).to_vec()).collect()
    }

    /// `W × W'` acting on pairs; input `(x, x')` is `x * |X'| + x'`.
    pub fn product(&self, other: &Channel) -> Channel {
        let nx = self.nx * other.nx;
        let ny = self.ny * other.ny;
        let mut data = Vec::with_capacity(nx * ny);
        for x1 in 0..self.nx {
            for x2 in 0..other.nx {
                for &a in self.row(x1) {
                    for &b in other.row(x2) {
                        data.push(a * b);
                    }
                }
            }
        }
        Channel { nx, ny, data }
    }

    /// Output law `P · W`.
    pub fn output_distribution(&self, p: &Distribution) -> Result<Distribution, MeasureError> {
        if p.len() != self.nx {
            return Err(MeasureError::AlphabetMismatch {
                left: p.len(),
                right: self.nx,
            });
        }
        let mut out = vec![0.0; self.ny];
        for (x, &px) in p.probs().iter().enumerate() {
            for (y, &v) in self.row(x).iter().enumerate() {
                out[y] += px * v;
            }
        }
        Distribution::new(out)
    }

    /// True when every row is identical.
    pub fn is_constant(&self) -> bool {
        (1..self.nx).all(|x| self.row(x) == self.row(0))
    }
}

impl TryFrom<Vec<Vec<f64>>> for Channel {
    type Error = MeasureError;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        Channel::new(rows)
    }
}

impl From<Channel> for Vec<Vec<f64>> {
    fn from(c: Channel) -> Self {
        c.rows()
    }
}
