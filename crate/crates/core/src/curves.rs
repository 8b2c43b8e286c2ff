//! Discretized functional observations.
//!
//! Curves are stored as their values on a shared [`TimeGrid`]; all integrals
//! over `[0, 1]` are replaced by quadrature sums with the grid's weights.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quadrature rule used to turn integrals into weighted sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRule {
    #[default]
    Trapezoid,
    RiemannLeft,
}

impl std::str::FromStr for QuadratureRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trapezoid" => Ok(QuadratureRule::Trapezoid),
            "riemann-left" => Ok(QuadratureRule::RiemannLeft),
            other => Err(Error::config(format!(
                "quadrature rule must be 'trapezoid' or 'riemann-left', got '{other}'"
            ))),
        }
    }
}

/// Measurement points `t_1 < ... < t_J` in `[0, 1]` with their quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
    rule: QuadratureRule,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>, rule: QuadratureRule) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::validation(format!(
                "time grid needs at least 2 points, got {}",
                points.len()
            )));
        }
        for (k, &t) in points.iter().enumerate() {
            if !t.is_finite() || !(0.0..=1.0).contains(&t) {
                return Err(Error::validation(format!(
                    "time point {k} = {t} lies outside [0, 1]"
                )));
            }
        }
        if let Some(k) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::validation(format!(
                "time points must be strictly increasing (points {k} and {})",
                k + 1
            )));
        }
        let weights = weights_for(&points, rule);
        Ok(TimeGrid {
            points,
            weights,
            rule,
        })
    }

    /// `t_k = (k - 1) / (J - 1)` for `k = 1..=J`.
    pub fn equispaced(len: usize, rule: QuadratureRule) -> Result<Self> {
        if len < 2 {
            return Err(Error::validation(format!(
                "time grid needs at least 2 points, got {len}"
            )));
        }
        let step = (len - 1) as f64;
        Self::new((0..len).map(|k| k as f64 / step).collect(), rule)
    }

    /// Same points, different quadrature rule.
    pub fn with_rule(&self, rule: QuadratureRule) -> Self {
        TimeGrid {
            points: self.points.clone(),
            weights: weights_for(&self.points, rule),
            rule,
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rule(&self) -> QuadratureRule {
        self.rule
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Quadrature weights of `grid` under `rule`.
///
/// Trapezoid puts half of each adjacent gap on a point; left Riemann gives each
/// point the gap to its right, with the last point copying the previous weight.
pub fn quadrature_weights(grid: &TimeGrid, rule: QuadratureRule) -> Vec<f64> {
    weights_for(grid.points(), rule)
}

fn weights_for(t: &[f64], rule: QuadratureRule) -> Vec<f64> {
    let j = t.len();
    match rule {
        QuadratureRule::Trapezoid => (0..j)
            .map(|k| {
                if k == 0 {
                    (t[1] - t[0]) / 2.0
                } else if k == j - 1 {
                    (t[j - 1] - t[j - 2]) / 2.0
                } else {
                    (t[k + 1] - t[k - 1]) / 2.0
                }
            })
            .collect(),
        QuadratureRule::RiemannLeft => {
            let mut w: Vec<f64> = t.windows(2).map(|p| p[1] - p[0]).collect();
            w.push(w[j - 2]);
            w
        }
    }
}

/// Values of one functional observation at the grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve(Vec<f64>);

impl Curve {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain {
                index: k,
                message: format!("curve value {} is not finite", values[k]),
            });
        }
        Ok(Curve(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `⟨u, v⟩ ≈ Σ_k u_k v_k Δ_k`.
pub fn inner_product(u: &Curve, v: &Curve, grid: &TimeGrid) -> Result<f64> {
    if u.len() != grid.len() || v.len() != grid.len() {
        return Err(Error::validation(format!(
            "curve lengths {} and {} do not match grid length {}",
            u.len(),
            v.len(),
            grid.len()
        )));
    }
    Ok(weighted_dot(u.values(), v.values(), grid.weights()))
}

pub(crate) fn weighted_dot(u: &[f64], v: &[f64], w: &[f64]) -> f64 {
    u.iter().zip(v).zip(w).map(|((a, b), d)| a * b * d).sum()
}

/// Logarithmic cumulative return path `ln p_k - ln p_1`.
pub fn log_cir(prices: &[f64]) -> Result<Curve> {
    if let Some(k) = prices.iter().position(|&p| p <= 0.0 || !p.is_finite()) {
        return Err(Error::Domain {
            index: k,
            message: format!("price {} must be positive and finite", prices[k]),
        });
    }
    let Some(&first) = prices.first() else {
        return Err(Error::validation("empty price path"));
    };
    let base = first.ln();
    let values = prices
        .iter()
        .enumerate()
        .map(|(k, p)| if k == 0 { 0.0 } else { p.ln() - base })
        .collect();
    Curve::new(values)
}

/// A labelled group of curves.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSample {
    label: String,
    curves: Vec<Curve>,
}

impl FunctionalSample {
    /// Every sample needs at least two curves, all of the same length.
    pub fn new(label: impl Into<String>, curves: Vec<Curve>) -> Result<Self> {
        let label = label.into();
        if curves.len() < 2 {
            return Err(Error::validation(format!(
                "sample '{label}' has {} curve(s); at least 2 are required",
                curves.len()
            )));
        }
        let j = curves[0].len();
        if let Some(i) = curves.iter().position(|c| c.len() != j) {
            return Err(Error::validation(format!(
                "sample '{label}': curve {i} has {} values, expected {j}",
                curves[i].len()
            )));
        }
        Ok(FunctionalSample { label, curves })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn curves(&self) -> &[Curve] {
        &self.curves
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub(crate) fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if self.curves[0].len() != grid.len() {
            return Err(Error::validation(format!(
                "sample '{}' has curves of length {}, grid has {} points",
                self.label,
                self.curves[0].len(),
                grid.len()
            )));
        }
        Ok(())
    }
}

/// `K ≥ 2` samples on a common grid, pooled in sample order.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledDataset {
    grid: TimeGrid,
    samples: Vec<FunctionalSample>,
}

impl PooledDataset {
    pub fn new(grid: TimeGrid, samples: Vec<FunctionalSample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::validation(format!(
                "need at least 2 samples, got {}",
                samples.len()
            )));
        }
        for s in &samples {
            s.check_grid(&grid)?;
        }
        Ok(PooledDataset { grid, samples })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[FunctionalSample] {
        &self.samples
    }

    /// Number of samples `K`.
    pub fn k(&self) -> usize {
        self.samples.len()
    }

    /// Sample sizes `(n_1, ..., n_K)`.
    pub fn sizes(&self) -> Vec<usize> {
        self.samples.iter().map(FunctionalSample::len).collect()
    }

    /// Pooled size `N`.
    pub fn total(&self) -> usize {
        self.samples.iter().map(FunctionalSample::len).sum()
    }

    /// The ordered pooled list: sample 1 first, then sample 2, and so on.
    pub fn pooled(&self) -> impl Iterator<Item = &Curve> + '_ {
        self.samples.iter().flat_map(|s| s.curves.iter())
    }

    /// Pooled curves as an `N × J` matrix, one row per curve.
    pub fn pooled_matrix(&self) -> DMatrix<f64> {
        let j = self.grid.len();
        let rows: Vec<&Curve> = self.pooled().collect();
        DMatrix::from_fn(rows.len(), j, |r, c| rows[r].values()[c])
    }

    /// Regroup the pooled list: curve `order[i]` goes to position `i`, and
    /// positions are cut into groups with the original sizes.
    pub(crate) fn regroup(&self, order: &[usize]) -> PooledDataset {
        let pooled: Vec<&Curve> = self.pooled().collect();
        let mut next = order.iter();
        let samples = self
            .samples
            .iter()
            .map(|s| FunctionalSample {
                label: s.label.clone(),
                curves: next
                    .by_ref()
                    .take(s.len())
                    .map(|&i| pooled[i].clone())
                    .collect(),
            })
            .collect();
        PooledDataset {
            grid: self.grid.clone(),
            samples,
        }
    }

    /// Replace the quadrature rule, keeping points and curves.
    pub fn with_rule(mut self, rule: QuadratureRule) -> Self {
        self.grid = self.grid.with_rule(rule);
        self
    }
}

/// Which column of the table holds the group label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl Default for LabelColumn {
    fn default() -> Self {
        LabelColumn::Index(0)
    }
}

impl std::str::FromStr for LabelColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::config("label column must not be empty"));
        }
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

/// Layout of a delimited curve table.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestFormat {
    /// Field delimiter; detected from the first line (tab or comma) when unset.
    pub delimiter: Option<u8>,
    pub has_header: bool,
    pub label_column: LabelColumn,
    pub rule: QuadratureRule,
}

impl Default for IngestFormat {
    fn default() -> Self {
        IngestFormat {
            delimiter: None,
            has_header: true,
            label_column: LabelColumn::default(),
            rule: QuadratureRule::default(),
        }
    }
}

fn detect_delimiter(text: &str) -> u8 {
    let first = text.lines().next().unwrap_or("");
    if first.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

/// Read a curve table: one row per curve, one label column, `J` value columns.
///
/// Groups appear in the order their labels are first seen. Row numbers in
/// errors are 1-based file lines.
pub fn load_curves<R: Read>(mut source: R, format: &IngestFormat) -> Result<PooledDataset> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let delimiter = format.delimiter.unwrap_or_else(|| detect_delimiter(&text));
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut records = reader.records();
    let mut header: Option<csv::StringRecord> = None;
    if format.has_header {
        match records.next() {
            Some(r) => header = Some(r?),
            None => return Err(Error::validation("input has no header row")),
        }
    }

    let label_idx = match (&format.label_column, &header) {
        (LabelColumn::Index(i), _) => *i,
        (LabelColumn::Name(name), Some(h)) => h
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::config(format!("label column '{name}' not found in header")))?,
        (LabelColumn::Name(name), None) => {
            return Err(Error::config(format!(
                "label column '{name}' selected by name but the input has no header"
            )))
        }
    };

    let mut width = header.as_ref().map(|h| h.len());
    if let (Some(w), Some(_)) = (width, &header) {
        if label_idx >= w {
            return Err(Error::config(format!(
                "label column index {label_idx} out of range for {w} columns"
            )));
        }
    }

    let row_offset = usize::from(format.has_header) + 1;
    let mut groups: Vec<(String, Vec<Curve>)> = Vec::new();
    for (i, record) in records.enumerate() {
        let row = i + row_offset;
        let record = record?;
        if record.len() == 1 && record.get(0).is_some_and(str::is_empty) {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::Parse {
                row,
                message: format!("expected {w} fields, found {}", record.len()),
            });
        }
        if label_idx >= w {
            return Err(Error::config(format!(
                "label column index {label_idx} out of range for {w} columns"
            )));
        }
        let mut values = Vec::with_capacity(w - 1);
        for (col, field) in record.iter().enumerate() {
            if col == label_idx {
                continue;
            }
            if field.is_empty() {
                return Err(Error::validation(format!(
                    "missing value at row {row}, column {}",
                    col + 1
                )));
            }
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                message: format!("column {}: '{field}' is not a number", col + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::validation(format!(
                    "non-finite value {v} at row {row}, column {}",
                    col + 1
                )));
            }
            values.push(v);
        }
        let label = record.get(label_idx).unwrap_or_default().to_string();
        let curve = Curve(values);
        match groups.iter_mut().find(|(l, _)| *l == label) {
            Some((_, curves)) => curves.push(curve),
            None => groups.push((label, vec![curve])),
        }
    }

    let j = width.map(|w| w - 1).unwrap_or(0);
    let grid = match header {
        Some(h) => grid_from_header(&h, label_idx, format.rule)?,
        None => TimeGrid::equispaced(j, format.rule)?,
    };
    if groups.len() < 2 {
        return Err(Error::validation(format!(
            "need at least 2 groups, found {}",
            groups.len()
        )));
    }
    let samples = groups
        .into_iter()
        .map(|(label, curves)| FunctionalSample::new(label, curves))
        .collect::<Result<Vec<_>>>()?;
    PooledDataset::new(grid, samples)
}

/// Numeric headers name the time points; increasing headers outside `[0, 1]`
/// are mapped affinely onto `[0, 1]`. Anything else falls back to equispaced.
fn grid_from_header(
    header: &csv::StringRecord,
    label_idx: usize,
    rule: QuadratureRule,
) -> Result<TimeGrid> {
    let names: Vec<&str> = header
        .iter()
        .enumerate()
        .filter(|(c, _)| *c != label_idx)
        .map(|(_, f)| f)
        .collect();
    let parsed: Option<Vec<f64>> = names.iter().map(|f| f.parse::<f64>().ok()).collect();
    let Some(points) = parsed.filter(|p| p.iter().all(|t| t.is_finite())) else {
        return TimeGrid::equispaced(names.len(), rule);
    };
    if points.len() >= 2 && points.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parse {
            row: 1,
            message: "numeric header time points must be strictly increasing".into(),
        });
    }
    let inside = points.iter().all(|t| (0.0..=1.0).contains(t));
    if inside || points.len() < 2 {
        TimeGrid::new(points, rule)
    } else {
        let (lo, hi) = (points[0], points[points.len() - 1]);
        TimeGrid::new(points.iter().map(|t| (t - lo) / (hi - lo)).collect(), rule)
    }
}

/// Write a dataset in the table layout read by [`load_curves`], label first.
///
/// Floats use Rust's shortest round-trip formatting, so reading the output
/// back reproduces every value bit for bit.
pub fn write_curves<W: Write>(dataset: &PooledDataset, sink: W, delimiter: u8) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_writer(sink);
    let mut header = vec!["label".to_string()];
    header.extend(dataset.grid().points().iter().map(|t| format!("{t:?}")));
    writer.write_record(&header)?;
    for sample in dataset.samples() {
        for curve in sample.curves() {
            let mut row = vec![sample.label().to_string()];
            row.extend(curve.values().iter().map(|v| format!("{v:?}")));
            writer.write_record(&row)?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(points: &[f64]) -> TimeGrid {
        TimeGrid::new(points.to_vec(), QuadratureRule::Trapezoid).unwrap()
    }

    #[test]
    fn trapezoid_weights_equispaced() {
        let g = TimeGrid::equispaced(3, QuadratureRule::Trapezoid).unwrap();
        assert_eq!(g.weights(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn riemann_left_copies_last_weight() {
        let g = TimeGrid::equispaced(3, QuadratureRule::RiemannLeft).unwrap();
        assert_eq!(g.weights(), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn trapezoid_weights_uneven() {
        let w = quadrature_weights(&grid(&[0.0, 0.1, 1.0]), QuadratureRule::Trapezoid);
        let expected = [0.05, 0.5, 0.45];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{w:?}");
        }
    }

    #[test]
    fn equispaced_weights_sum_to_one() {
        for j in [2, 5, 72] {
            let g = TimeGrid::equispaced(j, QuadratureRule::Trapezoid).unwrap();
            let s: f64 = g.weights().iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            let s: f64 = g
                .with_rule(QuadratureRule::RiemannLeft)
                .weights()
                .iter()
                .sum();
            assert!(s > 0.0 && s <= 1.0 + 1.0 / (j - 1) as f64 + 1e-12);
        }
    }

    #[test]
    fn grid_rejects_bad_points() {
        assert!(TimeGrid::new(vec![0.0], QuadratureRule::Trapezoid).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.0], QuadratureRule::Trapezoid).is_err());
        assert!(TimeGrid::new(vec![0.0, 1.5], QuadratureRule::Trapezoid).is_err());
        assert!(TimeGrid::new(vec![0.5, 0.2], QuadratureRule::Trapezoid).is_err());
    }

    #[test]
    fn inner_product_examples() {
        let g = TimeGrid::equispaced(5, QuadratureRule::Trapezoid).unwrap();
        let one = Curve::new(vec![1.0; 5]).unwrap();
        let zero = Curve::new(vec![0.0; 5]).unwrap();
        let v = Curve::new(vec![3.0, -1.0, 2.0, 7.0, 0.5]).unwrap();
        assert!((inner_product(&one, &one, &g).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(inner_product(&zero, &v, &g).unwrap(), 0.0);

        let g2 = grid(&[0.25, 0.75]).with_rule(QuadratureRule::RiemannLeft);
        assert_eq!(g2.weights(), &[0.5, 0.5]);
        let u = Curve::new(vec![1.0, 2.0]).unwrap();
        let v = Curve::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(inner_product(&u, &v, &g2).unwrap(), 5.5);
    }

    #[test]
    fn inner_product_grid_mismatch() {
        let g = TimeGrid::equispaced(3, QuadratureRule::Trapezoid).unwrap();
        let u = Curve::new(vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            inner_product(&u, &u, &g),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn log_cir_examples() {
        assert_eq!(log_cir(&[5.0; 4]).unwrap().values(), &[0.0; 4]);
        let e = std::f64::consts::E;
        let c = log_cir(&[100.0, 100.0 * e, 100.0 * e * e]).unwrap();
        assert!((c.values()[1] - 1.0).abs() < 1e-12);
        assert!((c.values()[2] - 2.0).abs() < 1e-12);
        let c = log_cir(&[100.0, 50.0]).unwrap();
        assert!((c.values()[1] + std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn log_cir_rejects_nonpositive_price() {
        match log_cir(&[1.0, 2.0, 0.0]) {
            Err(Error::Domain { index, .. }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(log_cir(&[-1.0]).is_err());
    }

    #[test]
    fn load_rejects_undersized_group() {
        let text = "label,a,b,c,d\nA,1,2,3,4\nA,1,2,3,5\nB,0,0,0,0\n";
        let err = load_curves(text.as_bytes(), &IngestFormat::default()).unwrap_err();
        assert!(
            matches!(err, Error::Validation(ref m) if m.contains("'B'")),
            "{err}"
        );
    }

    #[test]
    fn load_groups_in_first_appearance_order() {
        let text = "\
label,a,b,c,d,e
C,1,2,3,4,5
A,0,0,0,0,0
C,2,2,2,2,2
B,1,1,1,1,1
A,9,9,9,9,9
B,3,3,3,3,3
";
        let ds = load_curves(text.as_bytes(), &IngestFormat::default()).unwrap();
        assert_eq!(ds.k(), 3);
        assert_eq!(ds.total(), 6);
        let labels: Vec<&str> = ds.samples().iter().map(|s| s.label()).collect();
        assert_eq!(labels, ["C", "A", "B"]);
        let firsts: Vec<f64> = ds.pooled().map(|c| c.values()[0]).collect();
        assert_eq!(firsts, [1.0, 2.0, 0.0, 9.0, 1.0, 3.0]);
        assert_eq!(ds.grid().points(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn load_numeric_header_sets_grid() {
        let text = "label,0.0,0.5,1.0\nA,1,2,3\nA,1,2,4\nB,0,1,0\nB,1,1,1\n";
        let ds = load_curves(text.as_bytes(), &IngestFormat::default()).unwrap();
        assert_eq!(ds.grid().points(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn load_rescales_minute_header() {
        let text = "label,0,20,40,80\nA,1,2,3,4\nA,1,2,4,4\nB,0,1,0,0\nB,1,1,1,1\n";
        let ds = load_curves(text.as_bytes(), &IngestFormat::default()).unwrap();
        assert_eq!(ds.grid().points(), &[0.0, 0.25, 0.5, 1.0]);
    }

    #[test]
    fn load_tab_and_label_by_name() {
        let text = "x1\tgroup\tx2\n1\tA\t2\n3\tA\t4\n5\tB\t6\n7\tB\t8\n";
        let format = IngestFormat {
            label_column: "group".parse().unwrap(),
            ..Default::default()
        };
        let ds = load_curves(text.as_bytes(), &format).unwrap();
        assert_eq!(ds.samples()[1].curves()[1].values(), &[7.0, 8.0]);
    }

    #[test]
    fn load_without_header() {
        let text = "A,1,2\nA,3,4\nB,5,6\nB,7,8\n";
        let format = IngestFormat {
            has_header: false,
            ..Default::default()
        };
        let ds = load_curves(text.as_bytes(), &format).unwrap();
        assert_eq!(ds.total(), 4);
        assert_eq!(ds.grid().points(), &[0.0, 1.0]);
    }

    #[test]
    fn load_reports_ragged_row() {
        let text = "label,a,b\nA,1,2\nA,1\nB,1,1\n";
        match load_curves(text.as_bytes(), &IngestFormat::default()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_reports_nonfinite_and_missing() {
        let text = "label,a,b\nA,1,NaN\nA,1,1\nB,1,1\nB,2,2\n";
        let err = load_curves(text.as_bytes(), &IngestFormat::default()).unwrap_err();
        assert!(
            matches!(err, Error::Validation(ref m) if m.contains("row 2, column 3")),
            "{err}"
        );
        let text = "label,a,b\nA,1,2\nA,,1\nB,1,1\nB,2,2\n";
        let err = load_curves(text.as_bytes(), &IngestFormat::default()).unwrap_err();
        assert!(
            matches!(err, Error::Validation(ref m) if m.contains("missing")),
            "{err}"
        );
    }

    #[test]
    fn load_rejects_single_group() {
        let text = "label,a,b\nA,1,2\nA,1,1\n";
        assert!(matches!(
            load_curves(text.as_bytes(), &IngestFormat::default()),
            Err(Error::Validation(_))
        ));
    }

    proptest! {
        #[test]
        fn inner_product_is_symmetric_bilinear(
            u in prop::collection::vec(-10.0f64..10.0, 6),
            v in prop::collection::vec(-10.0f64..10.0, 6),
            c in -5.0f64..5.0,
        ) {
            let g = TimeGrid::equispaced(6, QuadratureRule::Trapezoid).unwrap();
            let cu = Curve::new(u.iter().map(|x| c * x).collect()).unwrap();
            let u = Curve::new(u).unwrap();
            let v = Curve::new(v).unwrap();
            let uv = inner_product(&u, &v, &g).unwrap();
            let vu = inner_product(&v, &u, &g).unwrap();
            prop_assert!((uv - vu).abs() <= 1e-12 * uv.abs().max(1.0));
            let scaled = inner_product(&cu, &v, &g).unwrap();
            prop_assert!((scaled - c * uv).abs() <= 1e-12 * (c * uv).abs().max(1.0));
            prop_assert!(inner_product(&u, &u, &g).unwrap() >= 0.0);
        }

        #[test]
        fn log_cir_starts_at_zero(prices in prop::collection::vec(1e-3f64..1e6, 1..20)) {
            prop_assert_eq!(log_cir(&prices).unwrap().values()[0], 0.0);
        }

        #[test]
        fn write_then_load_is_bit_exact(
            values in prop::collection::vec(prop::num::f64::NORMAL, 12),
            tab in any::<bool>(),
        ) {
            let g = TimeGrid::equispaced(3, QuadratureRule::Trapezoid).unwrap();
            let curves: Vec<Curve> = values.chunks(3).map(|c| Curve::new(c.to_vec()).unwrap()).collect();
            let ds = PooledDataset::new(g, vec![
                FunctionalSample::new("A", curves[..2].to_vec()).unwrap(),
                FunctionalSample::new("B", curves[2..].to_vec()).unwrap(),
            ]).unwrap();
            let mut buf = Vec::new();
            write_curves(&ds, &mut buf, if tab { b'\t' } else { b',' }).unwrap();
            let back = load_curves(buf.as_slice(), &IngestFormat::default()).unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
