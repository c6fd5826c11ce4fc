//! Balanced panels, per-unit designs and unit-level OLS.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::linalg::{demean_cols, det_adj, Mat, Vector};

/// n units observed over the same T periods, k' regressors.
#[derive(Debug, Clone)]
pub struct BalancedPanel {
    n: usize,
    t: usize,
    k_prime: usize,
    y: Mat,
    x: Vec<Mat>,
    pub unit_ids: Vec<String>,
    pub time_ids: Vec<String>,
    designs: OnceLock<Vec<UnitDesign>>,
}

impl BalancedPanel {
    /// `y` is n x T, `x[i]` is T x k'.
    pub fn new(y: Mat, x: Vec<Mat>) -> Result<Self> {
        let unit_ids = (1..=y.nrows()).map(|i| i.to_string()).collect();
        let time_ids = (1..=y.ncols()).map(|t| t.to_string()).collect();
        Self::with_ids(y, x, unit_ids, time_ids)
    }

    pub fn with_ids(y: Mat, x: Vec<Mat>, unit_ids: Vec<String>, time_ids: Vec<String>) -> Result<Self> {
        let (n, t) = y.shape();
        if n == 0 || t == 0 {
            return Err(Error::EmptyInput);
        }
        if x.len() != n {
            return Err(Error::Malformed(format!("{} regressor blocks for {} units", x.len(), n)));
        }
        let k_prime = x[0].ncols();
        if k_prime == 0 {
            return Err(Error::Malformed("no regressors".into()));
        }
        for xi in &x {
            if xi.shape() != (t, k_prime) {
                return Err(Error::Malformed(format!("regressor block has shape {:?}", xi.shape())));
            }
        }
        if unit_ids.len() != n || time_ids.len() != t {
            return Err(Error::Malformed("identifier lengths do not match data".into()));
        }
        if t < k_prime + 1 {
            return Err(Error::TooFewPeriods { t, need: k_prime + 1 });
        }
        if n < 2 {
            return Err(Error::TooFewUnits(n));
        }
        if y.iter().any(|v| !v.is_finite()) || x.iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFiniteValue(0));
        }
        Ok(Self { n, t, k_prime, y, x, unit_ids, time_ids, designs: OnceLock::new() })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn t(&self) -> usize {
        self.t
    }
    pub fn k_prime(&self) -> usize {
        self.k_prime
    }
    /// Number of coefficients per unit, intercept included.
    pub fn k(&self) -> usize {
        self.k_prime + 1
    }
    pub fn y(&self) -> &Mat {
        &self.y
    }
    pub fn y_unit(&self, i: usize) -> Vector {
        self.y.row(i).transpose()
    }
    pub fn x_unit(&self, i: usize) -> &Mat {
        &self.x[i]
    }

    /// Per-unit designs, built once and cached.
    pub fn designs(&self) -> &[UnitDesign] {
        self.designs
            .get_or_init(|| (0..self.n).map(|i| UnitDesign::new(&self.x[i])).collect())
    }

    /// A copy with every regressor multiplied by `c`.
    pub fn scale_x(&self, c: f64) -> Self {
        let x = self.x.iter().map(|m| m * c).collect();
        Self::with_ids(self.y.clone(), x, self.unit_ids.clone(), self.time_ids.clone()).expect("valid")
    }

    /// A copy with outcome matrix replaced.
    pub fn with_y(&self, y: Mat) -> Result<Self> {
        Self::with_ids(y, self.x.clone(), self.unit_ids.clone(), self.time_ids.clone())
    }

    /// Cross-section averages ybar (T) and Xbar (T x k').
    pub fn cross_means(&self) -> (Vector, Mat) {
        let nf = self.n as f64;
        let ybar = Vector::from_iterator(self.t, (0..self.t).map(|t| self.y.column(t).sum() / nf));
        let mut xbar = Mat::zeros(self.t, self.k_prime);
        for xi in &self.x {
            xbar += xi;
        }
        (ybar, xbar / nf)
    }
}

/// Build the design of unit `i`.
pub fn build_unit_design(panel: &BalancedPanel, i: usize) -> UnitDesign {
    UnitDesign::new(panel.x_unit(i))
}

/// W = (tau, X), its Gram matrix, determinant, adjugate and Psi = X'M_T X.
#[derive(Debug, Clone)]
pub struct UnitDesign {
    pub w: Mat,
    pub gram: Mat,
    pub d: f64,
    pub adj: Mat,
    /// M_T X
    pub xd: Mat,
    pub psi_x: Mat,
}

impl UnitDesign {
    pub fn new(x: &Mat) -> Self {
        let (t, kp) = x.shape();
        let mut w = Mat::from_element(t, kp + 1, 1.0);
        w.view_mut((0, 1), (t, kp)).copy_from(x);
        let gram = w.transpose() * &w;
        let (d, adj) = det_adj(&gram);
        let xd = demean_cols(x);
        let psi_x = xd.transpose() * &xd;
        Self { w, gram, d, adj, xd, psi_x }
    }

    pub fn k(&self) -> usize {
        self.w.ncols()
    }

    /// d below 1e-12 (trace/k)^k counts as zero.
    pub fn is_singular(&self) -> bool {
        let k = self.k() as i32;
        let floor = 1e-12 * (self.gram.trace() / k as f64).powi(k);
        !(self.d > floor) || self.d <= 0.0
    }

    pub fn wty(&self, y: &Vector) -> Vector {
        self.w.transpose() * y
    }

    /// adj W'y / max(d, a): the OLS estimate above the threshold, the
    /// inversion-free trimmed estimate at or below it.
    pub fn trimmed_estimate(&self, y: &Vector, a_n: f64) -> Vector {
        (&self.adj * self.wty(y)) / self.d.max(a_n)
    }

    /// (1 + delta_i)(W'W)^{-1} = adj / max(d, a_n).
    pub fn scaled_inverse(&self, a_n: f64) -> Mat {
        &self.adj / self.d.max(a_n)
    }
}

/// theta_i = adj W'y / d.
pub fn unit_ols(design: &UnitDesign, y: &Vector) -> Result<Vector> {
    if design.is_singular() {
        return Err(Error::SingularDesign(vec![]));
    }
    Ok((&design.adj * design.wty(y)) / design.d)
}

/// One long-format record.
#[derive(Debug, Clone)]
pub struct Row {
    pub unit_id: String,
    pub time_id: String,
    pub y: f64,
    pub x: Vec<f64>,
}

fn id_cmp(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.partial_cmp(&y).unwrap_or(std::cmp::Ordering::Equal).then_with(|| a.cmp(b)),
        _ => a.cmp(b),
    }
}

/// Assemble a balanced panel from records in any order.
pub fn load_panel(rows: &[Row]) -> Result<BalancedPanel> {
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    let kp = rows[0].x.len();
    let mut units: Vec<String> = Vec::new();
    let mut times: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), usize> = BTreeMap::new();
    for (r, row) in rows.iter().enumerate() {
        if row.x.len() != kp {
            return Err(Error::Malformed(format!("row {} has {} regressors, expected {}", r + 1, row.x.len(), kp)));
        }
        if !row.y.is_finite() || row.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(r + 1));
        }
        let key = (row.unit_id.clone(), row.time_id.clone());
        if cells.insert(key, r).is_some() {
            return Err(Error::DuplicateCell { unit: row.unit_id.clone(), time: row.time_id.clone() });
        }
        units.push(row.unit_id.clone());
        times.push(row.time_id.clone());
    }
    units.sort_by(|a, b| id_cmp(a, b));
    units.dedup();
    times.sort_by(|a, b| id_cmp(a, b));
    times.dedup();
    let (n, t) = (units.len(), times.len());
    if cells.len() != n * t {
        return Err(Error::UnbalancedPanel(format!(
            "{} cells present, {} units x {} periods expected",
            cells.len(),
            n,
            t
        )));
    }
    if t < kp + 1 {
        return Err(Error::TooFewPeriods { t, need: kp + 1 });
    }
    let mut y = Mat::zeros(n, t);
    let mut x = vec![Mat::zeros(t, kp); n];
    for (i, u) in units.iter().enumerate() {
        for (s, tt) in times.iter().enumerate() {
            let r = cells[&(u.clone(), tt.clone())];
            y[(i, s)] = rows[r].y;
            for j in 0..kp {
                x[i][(s, j)] = rows[r].x[j];
            }
        }
    }
    BalancedPanel::with_ids(y, x, units, times)
}

/// Read CSV with header `unit_id,time_id,y,x1[,x2,...]`.
pub fn read_csv<R: Read>(reader: R) -> Result<BalancedPanel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Malformed(e.to_string()))?.clone();
    if header.len() < 4 || &header[0] != "unit_id" || &header[1] != "time_id" || &header[2] != "y" {
        return Err(Error::Malformed("header must be unit_id,time_id,y,x1[,x2,...]".into()));
    }
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Malformed(e.to_string()))?;
        if rec.len() != header.len() {
            return Err(Error::Malformed(format!("row {} has {} fields", r + 1, rec.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| Error::Malformed(format!("row {}: cannot parse '{}'", r + 1, s)))
        };
        let y = num(&rec[2])?;
        let x = (3..rec.len()).map(|j| num(&rec[j])).collect::<Result<Vec<_>>>()?;
        rows.push(Row { unit_id: rec[0].to_string(), time_id: rec[1].to_string(), y, x });
    }
    load_panel(&rows)
}

pub fn read_csv_path(path: &Path) -> Result<BalancedPanel> {
    let f = std::fs::File::open(path).map_err(|e| Error::Malformed(format!("{}: {}", path.display(), e)))?;
    read_csv(f)
}

/// Write a panel back out in long format.
pub fn write_csv<W: std::io::Write>(panel: &BalancedPanel, w: W) -> std::io::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["unit_id".to_string(), "time_id".to_string(), "y".to_string()];
    header.extend((1..=panel.k_prime()).map(|j| format!("x{}", j)));
    wr.write_record(&header)?;
    for i in 0..panel.n() {
        for s in 0..panel.t() {
            let mut rec = vec![panel.unit_ids[i].clone(), panel.time_ids[s].clone(), fmt17(panel.y()[(i, s)])];
            rec.extend((0..panel.k_prime()).map(|j| fmt17(panel.x_unit(i)[(s, j)])));
            wr.write_record(&rec)?;
        }
    }
    wr.flush()
}

/// Round-trip float formatting (17 significant digits).
pub fn fmt17(v: f64) -> String {
    format!("{:.16e}", v)
}

/// Map unit ids to their row index.
pub fn unit_index(panel: &BalancedPanel) -> HashMap<&str, usize> {
    panel.unit_ids.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect()
}
