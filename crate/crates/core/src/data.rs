//! Event/exposure tables cross-classified by age group and period.
//!
//! Cells are stored row-major: age is the major index, period the minor one.
//! Ages and periods are 1-based in every public signature to match the usual
//! demographic notation; storage is 0-based.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ApcError, Result};

/// Minimum number of age groups and periods (RW(2) needs three levels).
pub const MIN_LEVELS: usize = 3;

/// Dense row-major matrix indexed by (age, period).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(ApcError::domain(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Zero-based access.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Input layouts understood by [`load_table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableFormat {
    /// `age_group,period,births,exposure`, one row per cell.
    LongCsv,
    /// Births in an age × period grid; exposures in a sibling `.exposure.csv`.
    WideCsv,
}

impl std::str::FromStr for TableFormat {
    type Err = ApcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "long" | "long-csv" => Ok(TableFormat::LongCsv),
            "wide" | "wide-csv" => Ok(TableFormat::WideCsv),
            other => Err(ApcError::validation(format!("unknown table format `{other}`"))),
        }
    }
}

/// Births and person-years of exposure for A age groups over T periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApcTable {
    age_labels: Vec<String>,
    period_labels: Vec<String>,
    births: Vec<u64>,
    exposures: Vec<f64>,
    band_width_years: u32,
}

impl ApcTable {
    /// Builds a table from row-major (age-major) births and exposures.
    pub fn new(
        age_labels: Vec<String>,
        period_labels: Vec<String>,
        births: Vec<u64>,
        exposures: Vec<f64>,
        band_width_years: u32,
    ) -> Result<Self> {
        let n_age = age_labels.len();
        let n_period = period_labels.len();
        if n_age < MIN_LEVELS || n_period < MIN_LEVELS {
            return Err(ApcError::validation(format!(
                "table is {n_age}x{n_period}; at least {MIN_LEVELS} age groups and {MIN_LEVELS} periods are required"
            )));
        }
        if births.len() != n_age * n_period || exposures.len() != n_age * n_period {
            return Err(ApcError::validation(format!(
                "births ({}) and exposures ({}) must both have {} cells",
                births.len(),
                exposures.len(),
                n_age * n_period
            )));
        }
        if band_width_years == 0 {
            return Err(ApcError::validation("band width must be positive"));
        }
        for (i, &e) in exposures.iter().enumerate() {
            if !(e.is_finite() && e > 0.0) {
                return Err(ApcError::validation(format!(
                    "exposure must be positive and finite at age `{}`, period `{}` (got {e})",
                    age_labels[i / n_period],
                    period_labels[i % n_period]
                )));
            }
        }
        Ok(ApcTable {
            age_labels,
            period_labels,
            births,
            exposures,
            band_width_years,
        })
    }

    pub fn with_band_width(mut self, years: u32) -> Result<Self> {
        if years == 0 {
            return Err(ApcError::validation("band width must be positive"));
        }
        self.band_width_years = years;
        Ok(self)
    }

    pub fn n_age(&self) -> usize {
        self.age_labels.len()
    }

    pub fn n_period(&self) -> usize {
        self.period_labels.len()
    }

    /// Number of cohort diagonals, (A − 1) + T.
    pub fn n_cohort(&self) -> usize {
        self.n_age() - 1 + self.n_period()
    }

    pub fn n_cells(&self) -> usize {
        self.births.len()
    }

    pub fn age_labels(&self) -> &[String] {
        &self.age_labels
    }

    pub fn period_labels(&self) -> &[String] {
        &self.period_labels
    }

    pub fn band_width_years(&self) -> u32 {
        self.band_width_years
    }

    /// Births at 1-based (age, period).
    pub fn births(&self, a: usize, t: usize) -> u64 {
        self.births[self.offset(a, t)]
    }

    /// Exposure at 1-based (age, period).
    pub fn exposure(&self, a: usize, t: usize) -> f64 {
        self.exposures[self.offset(a, t)]
    }

    /// Row-major births.
    pub fn births_flat(&self) -> &[u64] {
        &self.births
    }

    /// Row-major exposures.
    pub fn exposures_flat(&self) -> &[f64] {
        &self.exposures
    }

    pub fn total_births(&self) -> u64 {
        self.births.iter().sum()
    }

    pub fn total_exposure(&self) -> f64 {
        self.exposures.iter().sum()
    }

    /// Cohort index of the 1-based cell (a, t).
    pub fn cohort_of(&self, a: usize, t: usize) -> usize {
        self.n_age() - a + t
    }

    fn offset(&self, a: usize, t: usize) -> usize {
        assert!(
            (1..=self.n_age()).contains(&a) && (1..=self.n_period()).contains(&t),
            "cell ({a}, {t}) outside {}x{} table",
            self.n_age(),
            self.n_period()
        );
        (a - 1) * self.n_period() + (t - 1)
    }

    /// Birth-year labels for each cohort diagonal.
    ///
    /// A cohort observed at age band `[lo, hi]` in a period starting in year
    /// `y` is labelled `y − hi` through `y − lo`. Falls back to `c<index>`
    /// when labels are not numeric ranges.
    pub fn cohort_labels(&self) -> Vec<String> {
        let ages: Option<Vec<(i64, i64)>> = self.age_labels.iter().map(|l| parse_range(l)).collect();
        let periods: Option<Vec<(i64, i64)>> =
            self.period_labels.iter().map(|l| parse_range(l)).collect();
        let n_age = self.n_age();
        (1..=self.n_cohort())
            .map(|c| match (&ages, &periods) {
                (Some(ages), Some(periods)) => {
                    // earliest period on the diagonal
                    let t = if c <= n_age { 1 } else { c - n_age + 1 };
                    let a = n_age + t - c;
                    let (age_lo, age_hi) = ages[a - 1];
                    let (year, _) = periods[t - 1];
                    format!("{}-{}", year - age_hi, year - age_lo)
                }
                _ => format!("c{c}"),
            })
            .collect()
    }
}

/// Cohort index c = (A − a) + t for 1-based age `a` and period `t`.
pub fn cohort_index(a: usize, t: usize, n_age: usize) -> Result<usize> {
    if a == 0 || a > n_age || t == 0 {
        return Err(ApcError::domain(format!(
            "cell (a={a}, t={t}) outside 1..={n_age} age groups"
        )));
    }
    Ok(n_age - a + t)
}

/// Age-specific rates, births / exposure, per cell.
pub fn asfr(table: &ApcTable) -> Matrix {
    let data = table
        .births
        .iter()
        .zip(&table.exposures)
        .map(|(&y, &p)| y as f64 / p)
        .collect();
    Matrix {
        rows: table.n_age(),
        cols: table.n_period(),
        data,
    }
}

/// Total fertility rate per period: band width times the column sum of ASFR.
pub fn tfr(table: &ApcTable) -> Vec<f64> {
    let rates = asfr(table);
    let width = f64::from(table.band_width_years);
    (0..rates.cols())
        .map(|t| width * (0..rates.rows()).map(|a| rates.get(a, t)).sum::<f64>())
        .collect()
}

/// Parses `"15-19"` / `"1948–1952"` into its bounds.
pub fn parse_range(label: &str) -> Option<(i64, i64)> {
    let mut parts = label.trim().splitn(2, ['-', '–']);
    let lo = parts.next()?.trim().parse().ok()?;
    let hi = parts.next()?.trim().parse().ok()?;
    Some((lo, hi))
}

fn label_order(a: &str, b: &str) -> std::cmp::Ordering {
    match (parse_range(a), parse_range(b)) {
        (Some(x), Some(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

fn sorted_labels<'a>(labels: impl Iterator<Item = &'a String>) -> Vec<String> {
    let mut out: Vec<String> = labels.cloned().collect();
    out.sort_by(|a, b| label_order(a, b));
    out.dedup();
    out
}

struct Cell {
    births: u64,
    exposure: f64,
}

fn format_err(path: &Path, message: impl Into<String>) -> ApcError {
    ApcError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn parse_births(raw: &str, age: &str, period: &str) -> Result<u64> {
    let value: f64 = raw.trim().parse().map_err(|_| {
        ApcError::validation(format!(
            "births `{raw}` at age `{age}`, period `{period}` is not a number"
        ))
    })?;
    if !(value.is_finite() && value >= 0.0 && value.fract() == 0.0) {
        return Err(ApcError::validation(format!(
            "births must be a non-negative integer at age `{age}`, period `{period}` (got {raw})"
        )));
    }
    Ok(value as u64)
}

fn parse_exposure(raw: &str, age: &str, period: &str) -> Result<f64> {
    let value: f64 = raw.trim().parse().map_err(|_| {
        ApcError::validation(format!(
            "exposure `{raw}` at age `{age}`, period `{period}` is not a number"
        ))
    })?;
    if !(value.is_finite() && value > 0.0) {
        return Err(ApcError::validation(format!(
            "exposure must be positive at age `{age}`, period `{period}` (got {raw})"
        )));
    }
    Ok(value)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| ApcError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(file))
}

fn csv_error(path: &Path, err: csv::Error) -> ApcError {
    if let csv::ErrorKind::Io(_) = err.kind() {
        if let csv::ErrorKind::Io(io) = err.into_kind() {
            return ApcError::io(path, io);
        }
        unreachable!()
    }
    format_err(path, err.to_string())
}

fn assemble(cells: BTreeMap<(String, String), Cell>) -> Result<ApcTable> {
    let ages = sorted_labels(cells.keys().map(|(a, _)| a));
    let periods = sorted_labels(cells.keys().map(|(_, p)| p));
    let mut births = Vec::with_capacity(ages.len() * periods.len());
    let mut exposures = Vec::with_capacity(ages.len() * periods.len());
    for age in &ages {
        for period in &periods {
            let cell = cells.get(&(age.clone(), period.clone())).ok_or_else(|| {
                ApcError::validation(format!("missing cell at age `{age}`, period `{period}`"))
            })?;
            births.push(cell.births);
            exposures.push(cell.exposure);
        }
    }
    let width = infer_band_width(&ages).unwrap_or(5);
    ApcTable::new(ages, periods, births, exposures, width)
}

fn infer_band_width(ages: &[String]) -> Option<u32> {
    let (lo, hi) = parse_range(ages.first()?)?;
    u32::try_from(hi - lo + 1).ok().filter(|w| *w > 0)
}

fn load_long(path: &Path) -> Result<ApcTable> {
    let mut reader = csv_reader(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let expected = ["age_group", "period", "births", "exposure"];
    if headers.len() != expected.len() || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(format_err(
            path,
            format!("expected header `{}`, found `{}`", expected.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut cells = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let (age, period) = (record[0].to_string(), record[1].to_string());
        let cell = Cell {
            births: parse_births(&record[2], &age, &period)?,
            exposure: parse_exposure(&record[3], &age, &period)?,
        };
        if cells.insert((age.clone(), period.clone()), cell).is_some() {
            return Err(ApcError::validation(format!(
                "duplicate cell at age `{age}`, period `{period}`"
            )));
        }
    }
    assemble(cells)
}

/// `births.csv` → `births.exposure.csv`.
pub fn exposure_sibling(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.exposure.csv"))
}

fn read_wide(path: &Path) -> Result<(Vec<String>, Vec<(String, Vec<String>)>)> {
    let mut reader = csv_reader(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.get(0) != Some("age_group") || headers.len() < 2 {
        return Err(format_err(path, "first column must be `age_group` followed by period columns"));
    }
    let periods: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        rows.push((
            record[0].to_string(),
            record.iter().skip(1).map(str::to_string).collect(),
        ));
    }
    Ok((periods, rows))
}

fn load_wide(path: &Path) -> Result<ApcTable> {
    let exposure_path = exposure_sibling(path);
    let (periods, birth_rows) = read_wide(path)?;
    let (exp_periods, exp_rows) = read_wide(&exposure_path)?;
    if periods != exp_periods {
        return Err(format_err(
            &exposure_path,
            "period columns differ from the births file",
        ));
    }
    let mut exposures = BTreeMap::new();
    for (age, values) in exp_rows {
        if exposures.insert(age.clone(), values).is_some() {
            return Err(ApcError::validation(format!(
                "duplicate exposure row for age `{age}`"
            )));
        }
    }
    let mut cells = BTreeMap::new();
    for (age, values) in birth_rows {
        let exp_values = exposures.get(&age).ok_or_else(|| {
            ApcError::validation(format!("age `{age}` has no exposure row"))
        })?;
        for ((period, b), e) in periods.iter().zip(&values).zip(exp_values) {
            let cell = Cell {
                births: parse_births(b, &age, period)?,
                exposure: parse_exposure(e, &age, period)?,
            };
            if cells.insert((age.clone(), period.clone()), cell).is_some() {
                return Err(ApcError::validation(format!(
                    "duplicate cell at age `{age}`, period `{period}`"
                )));
            }
        }
    }
    if cells.len() != exposures.len() * periods.len() {
        return Err(ApcError::validation(
            "exposure file has age rows missing from the births file",
        ));
    }
    assemble(cells)
}

/// Reads and validates a table; labels are sorted ascending regardless of
/// row order in the file.
pub fn load_table(path: impl AsRef<Path>, format: TableFormat) -> Result<ApcTable> {
    let path = path.as_ref();
    match format {
        TableFormat::LongCsv => load_long(path),
        TableFormat::WideCsv => load_wide(path),
    }
}

/// Writes the canonical long CSV layout.
pub fn write_long_csv(table: &ApcTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("age_group,period,births,exposure\n");
    for (a, age) in table.age_labels.iter().enumerate() {
        for (t, period) in table.period_labels.iter().enumerate() {
            let i = a * table.n_period() + t;
            out.push_str(&format!(
                "{age},{period},{},{}\n",
                table.births[i], table.exposures[i]
            ));
        }
    }
    std::fs::write(path, out).map_err(|e| ApcError::io(path, e))
}

/// Five-year age band labels starting at `first_age` ("15-19", "20-24", ...).
pub fn band_labels(first: i64, width: i64, count: usize) -> Vec<String> {
    (0..count as i64)
        .map(|i| {
            let lo = first + i * width;
            format!("{lo}-{}", lo + width - 1)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    fn long_body(ages: &[String], periods: &[String], f: impl Fn(usize, usize) -> (u64, f64)) -> String {
        let mut s = String::from("age_group,period,births,exposure\n");
        for (a, age) in ages.iter().enumerate() {
            for (t, period) in periods.iter().enumerate() {
                let (y, p) = f(a, t);
                s.push_str(&format!("{age},{period},{y},{p}\n"));
            }
        }
        s
    }

    #[test]
    fn loads_seven_by_fifteen() {
        let dir = tempfile::tempdir().unwrap();
        let ages = band_labels(15, 5, 7);
        let periods = band_labels(1948, 5, 15);
        let path = write(dir.path(), "t.csv", &long_body(&ages, &periods, |a, t| ((a + t) as u64, 1000.0)));
        let table = load_table(&path, TableFormat::LongCsv).unwrap();
        assert_eq!((table.n_age(), table.n_period(), table.n_cohort()), (7, 15, 21));
        assert_eq!(table.births(2, 3), 3);
        assert_eq!(table.band_width_years(), 5);
    }

    #[test]
    fn minimal_three_by_three() {
        let dir = tempfile::tempdir().unwrap();
        let ages = band_labels(15, 5, 3);
        let periods = band_labels(2000, 5, 3);
        let path = write(dir.path(), "t.csv", &long_body(&ages, &periods, |_, _| (1, 1.0)));
        let table = load_table(&path, TableFormat::LongCsv).unwrap();
        assert_eq!(table.n_cohort(), 5);
    }

    #[test]
    fn zero_exposure_names_cell() {
        let dir = tempfile::tempdir().unwrap();
        let ages = band_labels(15, 5, 3);
        let periods = band_labels(2000, 5, 3);
        let body = long_body(&ages, &periods, |a, t| (1, if a == 1 && t == 2 { 0.0 } else { 1.0 }));
        let path = write(dir.path(), "t.csv", &body);
        let err = load_table(&path, TableFormat::LongCsv).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, ApcError::Validation(_)));
        assert!(msg.contains("20-24") && msg.contains("2010-2014"), "{msg}");
    }

    #[test]
    fn negative_births_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            dir.path(),
            "t.csv",
            "age_group,period,births,exposure\n15-19,2000-2004,-3,10\n",
        );
        assert!(matches!(
            load_table(&path, TableFormat::LongCsv),
            Err(ApcError::Validation(_))
        ));
    }

    #[test]
    fn duplicate_cell_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ages = band_labels(15, 5, 3);
        let periods = band_labels(2000, 5, 3);
        let mut body = long_body(&ages, &periods, |_, _| (1, 1.0));
        body.push_str("15-19,2000-2004,2,1\n");
        let path = write(dir.path(), "t.csv", &body);
        let err = load_table(&path, TableFormat::LongCsv).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn ragged_row_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            dir.path(),
            "t.csv",
            "age_group,period,births,exposure\n15-19,2000-2004,2\n",
        );
        assert!(matches!(
            load_table(&path, TableFormat::LongCsv),
            Err(ApcError::Format { .. })
        ));
    }

    #[test]
    fn missing_cell_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ages = band_labels(15, 5, 3);
        let periods = band_labels(2000, 5, 3);
        let body = long_body(&ages, &periods, |_, _| (1, 1.0));
        let trimmed: Vec<&str> = body.lines().take(9).collect();
        let path = write(dir.path(), "t.csv", &(trimmed.join("\n") + "\n"));
        let err = load_table(&path, TableFormat::LongCsv).unwrap_err();
        assert!(err.to_string().contains("missing cell"), "{err}");
    }

    #[test]
    fn wide_matches_long() {
        let dir = tempfile::tempdir().unwrap();
        let ages = band_labels(15, 5, 3);
        let periods = band_labels(2000, 5, 4);
        let cell = |a: usize, t: usize| ((10 * a + t) as u64, 100.0 + (a * 4 + t) as f64);
        let long = write(dir.path(), "l.csv", &long_body(&ages, &periods, cell));
        let mut births = format!("age_group,{}\n", periods.join(","));
        let mut expo = births.clone();
        // rows deliberately reversed
        for (a, age) in ages.iter().enumerate().rev() {
            let b: Vec<String> = (0..4).map(|t| cell(a, t).0.to_string()).collect();
            let e: Vec<String> = (0..4).map(|t| cell(a, t).1.to_string()).collect();
            births.push_str(&format!("{age},{}\n", b.join(",")));
            expo.push_str(&format!("{age},{}\n", e.join(",")));
        }
        let wide = write(dir.path(), "w.csv", &births);
        write(dir.path(), "w.exposure.csv", &expo);
        let a = load_table(&long, TableFormat::LongCsv).unwrap();
        let b = load_table(&wide, TableFormat::WideCsv).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cohort_index_examples() {
        assert_eq!(cohort_index(7, 1, 7).unwrap(), 1);
        assert_eq!(cohort_index(1, 1, 7).unwrap(), 7);
        assert_eq!(cohort_index(1, 15, 7).unwrap(), 21);
        assert!(cohort_index(0, 1, 7).is_err());
        assert!(cohort_index(8, 1, 7).is_err());
        assert!(cohort_index(1, 0, 7).is_err());
    }

    #[test]
    fn cohort_index_constant_on_diagonals_and_surjective() {
        let (n_age, n_period) = (7, 15);
        let mut seen = vec![false; n_age - 1 + n_period];
        for a in 1..=n_age {
            for t in 1..=n_period {
                let c = cohort_index(a, t, n_age).unwrap();
                seen[c - 1] = true;
                if a > 1 && t > 1 {
                    assert_eq!(c, cohort_index(a - 1, t - 1, n_age).unwrap());
                }
            }
        }
        assert!(seen.iter().all(|s| *s));
    }

    fn table(births: Vec<u64>, exposures: Vec<f64>, a: usize, t: usize) -> ApcTable {
        ApcTable::new(band_labels(15, 5, a), band_labels(1948, 5, t), births, exposures, 5).unwrap()
    }

    #[test]
    fn asfr_examples() {
        let zero = table(vec![0; 9], vec![3.0; 9], 3, 3);
        assert!(asfr(&zero).as_slice().iter().all(|r| *r == 0.0));
        let mut births = vec![1; 9];
        let mut expo = vec![1.0; 9];
        births[4] = 50;
        expo[4] = 1000.0;
        assert_eq!(asfr(&table(births, expo, 3, 3)).get(1, 1), 0.05);
    }

    #[test]
    fn tfr_examples() {
        // constant ASFR r = 0.02 over seven groups
        let t = table(vec![20; 7 * 3], vec![1000.0; 7 * 3], 7, 3);
        for v in tfr(&t) {
            assert_eq!(v, 35.0 * 0.02);
        }
        let zero = table(vec![0; 9], vec![10.0; 9], 3, 3);
        assert!(tfr(&zero).iter().all(|v| *v == 0.0));
        // period-1 column of ASFR summing to 1.04
        let rates = [0.08, 0.30, 0.28, 0.20, 0.12, 0.05, 0.01];
        let mut births = vec![0u64; 7 * 3];
        for (a, r) in rates.iter().enumerate() {
            births[a * 3] = (r * 100_000.0_f64).round() as u64;
        }
        let t = table(births, vec![100_000.0; 21], 7, 3);
        assert!((tfr(&t)[0] - 5.2).abs() < 1e-12);
    }

    #[test]
    fn cohort_labels_follow_birth_years() {
        let t = table(vec![1; 21], vec![1.0; 21], 7, 3);
        let labels = t.cohort_labels();
        assert_eq!(labels.len(), 9);
        // oldest group (45-49) in 1948-1952
        assert_eq!(labels[0], "1899-1903");
        // youngest group (15-19) in 1948-1952
        assert_eq!(labels[6], "1929-1933");
        // youngest group in the third period
        assert_eq!(labels[8], "1939-1943");
    }

    #[test]
    fn rejects_small_tables() {
        let err = ApcTable::new(band_labels(15, 5, 2), band_labels(2000, 5, 3), vec![1; 6], vec![1.0; 6], 5);
        assert!(err.is_err());
    }
}
