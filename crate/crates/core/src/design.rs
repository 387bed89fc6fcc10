//! Input distributions, random designs and the learning-sample container.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column name used for prior weights in CSV files.
pub const WEIGHT_COLUMN: &str = "prior_weight";

/// Seeded generator used everywhere in the crate. ChaCha8 has a fixed,
/// documented output stream, so seeds reproduce across platforms.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent child seed (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputDistribution {
    pub kind: DistributionKind,
    pub lower: f64,
    pub upper: f64,
}

impl InputDistribution {
    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        let d = Self {
            kind: DistributionKind::Uniform,
            lower,
            upper,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
            return Err(Error::Config(format!(
                "invalid distribution bounds [{}, {}]",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    /// Maps a probability level in [0, 1) to the support.
    pub fn quantile(&self, u: f64) -> f64 {
        match self.kind {
            DistributionKind::Uniform => {
                let v = self.lower + u * (self.upper - self.lower);
                v.clamp(self.lower, self.upper)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self.kind {
            DistributionKind::Uniform => 0.5 * (self.lower + self.upper),
        }
    }

    pub fn variance(&self) -> f64 {
        match self.kind {
            DistributionKind::Uniform => (self.upper - self.lower).powi(2) / 12.0,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lower && v <= self.upper
    }
}

/// An n×p matrix of input points with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub points: DMatrix<f64>,
    pub column_names: Vec<String>,
    pub seed: u64,
}

impl Design {
    pub fn new(points: DMatrix<f64>, column_names: Vec<String>) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(Error::Dimension("design must have at least one row and column".into()));
        }
        if column_names.len() != points.ncols() {
            return Err(Error::Dimension(format!(
                "{} column names for {} columns",
                column_names.len(),
                points.ncols()
            )));
        }
        let mut seen = HashSet::new();
        for name in &column_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Config(format!("duplicate column name `{name}`")));
            }
        }
        Ok(Self {
            points,
            column_names,
            seed: 0,
        })
    }

    /// Default names `x1, x2, ...`.
    pub fn default_names(p: usize) -> Vec<String> {
        (1..=p).map(|j| format!("x{j}")).collect()
    }

    pub fn nrows(&self) -> usize {
        self.points.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.points.ncols()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.column_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Schema(format!("missing input column `{name}`")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.column_index(name)?;
        Ok(self.points.column(j).iter().copied().collect())
    }

    /// Keeps the named columns, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<Design> {
        let idx = names
            .iter()
            .map(|n| self.column_index(n))
            .collect::<Result<Vec<_>>>()?;
        let points = self.points.select_columns(idx.iter());
        let mut d = Design::new(points, names.iter().map(|s| s.to_string()).collect())?;
        d.seed = self.seed;
        Ok(d)
    }

    pub fn rows(&self, range: std::ops::Range<usize>) -> Design {
        Design {
            points: self.points.rows(range.start, range.len()).into_owned(),
            column_names: self.column_names.clone(),
            seed: self.seed,
        }
    }
}

/// The learning sample: inputs, scalar response and positive prior weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub design: Design,
    pub response: DVector<f64>,
    pub prior_weights: DVector<f64>,
}

impl Dataset {
    pub fn new(design: Design, response: DVector<f64>) -> Result<Self> {
        let n = design.nrows();
        Self::with_weights(design, response, DVector::from_element(n, 1.0))
    }

    pub fn with_weights(
        design: Design,
        response: DVector<f64>,
        prior_weights: DVector<f64>,
    ) -> Result<Self> {
        if response.len() != design.nrows() {
            return Err(Error::Dimension(format!(
                "response has {} values for {} design rows",
                response.len(),
                design.nrows()
            )));
        }
        if prior_weights.len() != design.nrows() {
            return Err(Error::Dimension("prior weights length differs from row count".into()));
        }
        if prior_weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Config("prior weights must be strictly positive".into()));
        }
        Ok(Self {
            design,
            response,
            prior_weights,
        })
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    /// Same inputs, new response, unit weights.
    pub fn with_response(&self, response: DVector<f64>) -> Result<Self> {
        Dataset::new(self.design.clone(), response)
    }

    pub fn reweighted(&self, prior_weights: DVector<f64>) -> Result<Self> {
        Dataset::with_weights(self.design.clone(), self.response.clone(), prior_weights)
    }

    pub fn unit_weights(&self) -> bool {
        self.prior_weights.iter().all(|&w| w == 1.0)
    }
}

fn check_request(dists: &[InputDistribution], n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("sample size must be at least 1".into()));
    }
    if dists.is_empty() {
        return Err(Error::Config("at least one input distribution is required".into()));
    }
    dists.iter().try_for_each(InputDistribution::validate)
}

/// Independent Monte Carlo draws, filled row by row from a ChaCha8 stream.
pub fn sample_monte_carlo(dists: &[InputDistribution], n: usize, seed: u64) -> Result<Design> {
    check_request(dists, n)?;
    let p = dists.len();
    let mut rng = seeded_rng(seed);
    let mut points = DMatrix::zeros(n, p);
    for i in 0..n {
        for (j, d) in dists.iter().enumerate() {
            points[(i, j)] = d.quantile(rng.random::<f64>());
        }
    }
    let mut design = Design::new(points, Design::default_names(p))?;
    design.seed = seed;
    Ok(design)
}

/// Latin hypercube sample: every column has exactly one point in each of
/// the n equal-probability strata; columns are paired by independent random
/// permutations.
pub fn sample_lhs(dists: &[InputDistribution], n: usize, seed: u64) -> Result<Design> {
    check_request(dists, n)?;
    let p = dists.len();
    let mut rng = seeded_rng(seed);
    let mut points = DMatrix::zeros(n, p);
    let mut perm: Vec<usize> = (0..n).collect();
    for (j, d) in dists.iter().enumerate() {
        perm.shuffle(&mut rng);
        for (i, &stratum) in perm.iter().enumerate() {
            let u = (stratum as f64 + rng.random::<f64>()) / n as f64;
            // stay strictly inside the stratum after rounding
            let lo = stratum as f64 / n as f64;
            let hi = (stratum + 1) as f64 / n as f64;
            let u = if u >= hi { lo + 0.5 * (hi - lo) } else { u };
            points[(i, j)] = d.quantile(u);
        }
    }
    let mut design = Design::new(points, Design::default_names(p))?;
    design.seed = seed;
    Ok(design)
}

/// Reads a dataset. The response column is `response` when given, otherwise
/// the last column; a column named `prior_weight` supplies prior weights.
pub fn load_csv(path: impl AsRef<Path>, response: Option<&str>) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, response)
}

pub fn read_csv<R: std::io::Read>(reader: R, response: Option<&str>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(e, 1))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.len() < 2 {
        return Err(Error::Parse {
            row: 1,
            column: headers.first().cloned().unwrap_or_default(),
            message: "need at least one input column and one response column".into(),
        });
    }
    let response_idx = match response {
        Some(name) => headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            row: 1,
            column: name.to_string(),
            message: "response column not found in header".into(),
        })?,
        None => headers.len() - 1,
    };
    let weight_idx = headers.iter().position(|h| h == WEIGHT_COLUMN);
    let input_idx: Vec<usize> = (0..headers.len())
        .filter(|&j| j != response_idx && Some(j) != weight_idx)
        .collect();
    if input_idx.is_empty() {
        return Err(Error::Parse {
            row: 1,
            column: headers[response_idx].clone(),
            message: "no input columns".into(),
        });
    }

    let mut values: Vec<f64> = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let row = r + 2;
        let record = record.map_err(|e| csv_error(e, row))?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: headers
                    .get(record.len().min(headers.len() - 1))
                    .cloned()
                    .unwrap_or_default(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let cell = |j: usize| -> Result<f64> {
            let raw = &record[j];
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    row,
                    column: headers[j].clone(),
                    message: format!("`{raw}` is not a finite number"),
                }),
            }
        };
        for &j in &input_idx {
            values.push(cell(j)?);
        }
        y.push(cell(response_idx)?);
        w.push(match weight_idx {
            Some(j) => cell(j)?,
            None => 1.0,
        });
    }
    if y.is_empty() {
        return Err(Error::Parse {
            row: 2,
            column: headers[0].clone(),
            message: "no data rows".into(),
        });
    }
    let n = y.len();
    let p = input_idx.len();
    let points = DMatrix::from_row_slice(n, p, &values);
    let names = input_idx.iter().map(|&j| headers[j].clone()).collect();
    let design = Design::new(points, names)?;
    Dataset::with_weights(design, DVector::from_vec(y), DVector::from_vec(w))
}

fn csv_error(e: csv::Error, row: usize) -> Error {
    Error::Parse {
        row: e.position().map(|p| p.line() as usize).unwrap_or(row),
        column: String::new(),
        message: e.to_string(),
    }
}

/// Formats a value with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes inputs, then the response column (`response_name`, default `y`),
/// then prior weights when they are not all one.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_csv_named(dataset, "y", path)
}

pub fn write_csv_named(dataset: &Dataset, response_name: &str, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    let mut header: Vec<&str> = dataset.design.column_names.iter().map(String::as_str).collect();
    header.push(response_name);
    let weights = !dataset.unit_weights();
    if weights {
        header.push(WEIGHT_COLUMN);
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..dataset.n() {
        let mut cells: Vec<String> = dataset
            .design
            .points
            .row(i)
            .iter()
            .map(|&v| format_f64(v))
            .collect();
        cells.push(format_f64(dataset.response[i]));
        if weights {
            cells.push(format_f64(dataset.prior_weights[i]));
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = match dir {
        Some(d) => d.join(format!(".{file_name}.tmp")),
        None => std::path::PathBuf::from(format!(".{file_name}.tmp")),
    };
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn pi_box(p: usize) -> Vec<InputDistribution> {
        vec![InputDistribution::uniform(-PI, PI).unwrap(); p]
    }

    #[test]
    fn monte_carlo_shape_and_bounds() {
        let d = sample_monte_carlo(&pi_box(3), 1000, 42).unwrap();
        assert_eq!((d.nrows(), d.ncols()), (1000, 3));
        assert!(d.points.iter().all(|v| (-PI..=PI).contains(v)));
        assert_eq!(d, sample_monte_carlo(&pi_box(3), 1000, 42).unwrap());
        assert_ne!(d.points, sample_monte_carlo(&pi_box(3), 1000, 43).unwrap().points);
    }

    #[test]
    fn narrow_interval_is_respected() {
        let eps = 1e-9;
        let d = sample_monte_carlo(&[InputDistribution::uniform(0.0, eps).unwrap()], 5, 1).unwrap();
        assert!(d.points.iter().all(|&v| (0.0..=eps).contains(&v)));
    }

    #[test]
    fn large_sample_mean_matches_uniform_moments() {
        let dist = InputDistribution::uniform(-PI, PI).unwrap();
        let n = 1_000_000;
        let d = sample_monte_carlo(&[dist], n, 7).unwrap();
        let col = d.points.column(0);
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (dist.variance() / n as f64).sqrt();
        assert!(mean.abs() < 3.0 * (2.0 * PI / 12f64.sqrt()) / 1e3);
        assert!((mean - dist.mean()).abs() < 4.0 * se);
        // variance of the sample variance of a uniform: (mu4 - sigma^4) / n
        let mu4 = (2.0 * PI).powi(4) / 80.0;
        let var_se = ((mu4 - dist.variance().powi(2)) / n as f64).sqrt();
        assert!((var - dist.variance()).abs() < 4.0 * var_se);
    }

    #[test]
    fn lhs_four_strata() {
        let d = sample_lhs(&[InputDistribution::uniform(0.0, 1.0).unwrap()], 4, 3).unwrap();
        let mut hits = [0; 4];
        for &v in d.points.column(0).iter() {
            hits[(v * 4.0).floor() as usize] += 1;
        }
        assert_eq!(hits, [1, 1, 1, 1]);
    }

    #[test]
    fn lhs_sixteen_inputs_stratified() {
        let n = 300;
        let d = sample_lhs(&pi_box(16), n, 11).unwrap();
        assert_eq!((d.nrows(), d.ncols()), (300, 16));
        for j in 0..16 {
            let mut hits = vec![0; n];
            for &v in d.points.column(j).iter() {
                let k = (((v + PI) / (2.0 * PI)) * n as f64).floor() as usize;
                hits[k.min(n - 1)] += 1;
            }
            assert!(hits.iter().all(|&h| h == 1), "column {j}");
        }
    }

    #[test]
    fn lhs_reproducible() {
        let u = [InputDistribution::uniform(0.0, 1.0).unwrap()];
        assert_eq!(sample_lhs(&u, 2, 5).unwrap(), sample_lhs(&u, 2, 5).unwrap());
    }

    #[test]
    fn bad_bounds_rejected() {
        assert!(matches!(InputDistribution::uniform(1.0, 1.0), Err(Error::Config(_))));
        let bad = InputDistribution {
            kind: DistributionKind::Uniform,
            lower: 2.0,
            upper: 1.0,
        };
        assert!(sample_monte_carlo(&[bad], 3, 0).is_err());
        assert!(sample_lhs(&[bad], 3, 0).is_err());
    }

    #[test]
    fn csv_three_rows() {
        let text = "x1,x2,y\n1,2,3\n4,5,6\n7,8,9\n";
        let d = read_csv(text.as_bytes(), None).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.design.ncols(), 2);
        assert_eq!(d.design.column_names, vec!["x1", "x2"]);
        assert_eq!(d.response[2], 9.0);
    }

    #[test]
    fn csv_nan_cell_named() {
        let text = "x1,x2,y\n1,2,3\n4,NaN,6\n";
        match read_csv(text.as_bytes(), None) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "x2");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_ragged_and_missing_response() {
        let ragged = "x1,x2,y\n1,2,3\n4,5\n";
        assert!(matches!(read_csv(ragged.as_bytes(), None), Err(Error::Parse { row: 3, .. })));
        let text = "x1,x2,y\n1,2,3\n";
        assert!(matches!(read_csv(text.as_bytes(), Some("z")), Err(Error::Parse { row: 1, .. })));
    }

    #[test]
    fn csv_named_response_and_weights() {
        let text = "y,a,prior_weight,b\n1,2,0.5,3\n4,5,2,6\n";
        let d = read_csv(text.as_bytes(), Some("y")).unwrap();
        assert_eq!(d.design.column_names, vec!["a", "b"]);
        assert_eq!(d.prior_weights.as_slice(), &[0.5, 2.0]);
        assert_eq!(d.response.as_slice(), &[1.0, 4.0]);
    }
}
