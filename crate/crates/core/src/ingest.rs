//! Tabular input: per-lesion CSV files, unit handling, habitat extraction from
//! voxel values, and barycentric coordinates for plotting.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distributions::CountVec;
use crate::models::{HabitatDataset, LesionId, MedianAdcDataset};
use crate::stats;
use crate::{Error, Result};

/// Upper validation bound for ADC values in 10⁻³ mm²/s.
pub const ADC_MAX: f64 = 4.0;

/// Units of ADC values in an input file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Units {
    /// 10⁻³ mm²/s, the internal unit.
    #[default]
    #[serde(rename = "1e-3mm2/s")]
    MilliMm2PerS,
    /// mm²/s; multiplied by 1000 on ingestion.
    #[serde(rename = "mm2/s")]
    Mm2PerS,
}

impl Units {
    pub fn scale(&self) -> f64 {
        match self {
            Units::MilliMm2PerS => 1.0,
            Units::Mm2PerS => 1000.0,
        }
    }

    pub const INTERNAL_LABEL: &'static str = "1e-3 mm^2/s";
}

impl std::str::FromStr for Units {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['²', '^'], "2").as_str() {
            "1e-3mm2/s" | "1e-3" | "milli" | "10e-3mm2/s" | "um2/ms" => Ok(Units::MilliMm2PerS),
            "mm2/s" => Ok(Units::Mm2PerS),
            other => Err(Error::Usage(format!("unknown units '{other}' (use mm2/s or 1e-3mm2/s)"))),
        }
    }
}

/// Options applied while reading measurement files.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IngestOptions {
    pub units: Units,
    /// Natural-log transform after validation (variance stabilization).
    pub log_transform: bool,
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

struct Table {
    path: PathBuf,
    index: HashMap<String, usize>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read<R: Read>(reader: R, path: &Path, required: &[&str]) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = r
            .headers()
            .map_err(|e| parse_error(path, 1, e.to_string()))?
            .clone();
        let index: HashMap<String, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_ascii_lowercase(), i))
            .collect();
        for col in required {
            if !index.contains_key(*col) {
                return Err(parse_error(path, 1, format!("missing column '{col}'")));
            }
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                parse_error(path, line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.iter().all(str::is_empty) {
                continue;
            }
            rows.push((line, rec));
        }
        Ok(Table {
            path: path.to_path_buf(),
            index,
            rows,
        })
    }

    fn get<'a>(&self, rec: &'a csv::StringRecord, line: u64, col: &str) -> Result<&'a str> {
        let i = self.index[col];
        match rec.get(i) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(parse_error(&self.path, line, format!("empty value in column '{col}'"))),
        }
    }

    fn number(&self, rec: &csv::StringRecord, line: u64, col: &str) -> Result<f64> {
        let raw = self.get(rec, line, col)?;
        let v: f64 = raw
            .parse()
            .map_err(|_| parse_error(&self.path, line, format!("non-numeric value '{raw}' in column '{col}'")))?;
        if !v.is_finite() {
            return Err(parse_error(&self.path, line, format!("non-finite value in column '{col}'")));
        }
        Ok(v)
    }

    fn count(&self, rec: &csv::StringRecord, line: u64, col: &str) -> Result<u64> {
        let raw = self.get(rec, line, col)?;
        raw.parse()
            .map_err(|_| parse_error(&self.path, line, format!("invalid count '{raw}' in column '{col}'")))
    }

    fn adc(&self, rec: &csv::StringRecord, line: u64, col: &str, units: Units) -> Result<f64> {
        let v = self.number(rec, line, col)? * units.scale();
        if !(0.0..=ADC_MAX).contains(&v) {
            return Err(parse_error(
                &self.path,
                line,
                format!("ADC value {v} (1e-3 mm^2/s) outside the valid range [0, {ADC_MAX}]"),
            ));
        }
        Ok(v)
    }
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum MedianPoint {
    B1,
    B2,
    Pre,
    Post,
}

/// Reads `patient,lesion,timepoint,value` with timepoints `b1, b2, pre, post`.
///
/// Lesions with both `b1` and `b2` form baseline pairs; lesions with `pre`
/// and `post` form treatment pairs. Lesions keep their order of first appearance.
pub fn load_median_csv(path: &Path, options: IngestOptions) -> Result<MedianAdcDataset> {
    read_median_csv(open(path)?, path, options)
}

pub fn read_median_csv<R: Read>(reader: R, path: &Path, options: IngestOptions) -> Result<MedianAdcDataset> {
    let table = Table::read(reader, path, &["patient", "lesion", "timepoint", "value"])?;
    let mut order: Vec<LesionId> = Vec::new();
    let mut values: HashMap<LesionId, HashMap<MedianPoint, (f64, u64)>> = HashMap::new();
    for (line, rec) in &table.rows {
        let line = *line;
        let id = LesionId::new(table.get(rec, line, "patient")?, table.get(rec, line, "lesion")?);
        let tp = match table.get(rec, line, "timepoint")?.to_ascii_lowercase().as_str() {
            "b1" | "baseline1" => MedianPoint::B1,
            "b2" | "baseline2" => MedianPoint::B2,
            "pre" => MedianPoint::Pre,
            "post" => MedianPoint::Post,
            other => {
                return Err(parse_error(&table.path, line, format!("unknown timepoint '{other}' (use b1, b2, pre, post)")))
            }
        };
        let mut v = table.adc(rec, line, "value", options.units)?;
        if options.log_transform {
            if v <= 0.0 {
                return Err(parse_error(&table.path, line, "log transform needs positive values"));
            }
            v = v.ln();
        }
        let entry = values.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            HashMap::new()
        });
        if let Some((_, first)) = entry.insert(tp, (v, line)) {
            return Err(parse_error(
                &table.path,
                line,
                format!("duplicate ({}, {}, {:?}) first seen on line {first}", id.patient, id.lesion, tp),
            ));
        }
    }
    let (mut yb1, mut yb2, mut yp1, mut yp2) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let (mut bids, mut pids) = (Vec::new(), Vec::new());
    for id in order {
        let v = &values[&id];
        let pair = |a: MedianPoint, b: MedianPoint| -> Result<Option<(f64, f64)>> {
            match (v.get(&a), v.get(&b)) {
                (Some(x), Some(y)) => Ok(Some((x.0, y.0))),
                (None, None) => Ok(None),
                (Some((_, line)), None) | (None, Some((_, line))) => Err(parse_error(
                    &table.path,
                    *line,
                    format!("lesion {id} has an incomplete {a:?}/{b:?} pair"),
                )),
            }
        };
        if let Some((a, b)) = pair(MedianPoint::B1, MedianPoint::B2)? {
            yb1.push(a);
            yb2.push(b);
            bids.push(id.clone());
        }
        if let Some((a, b)) = pair(MedianPoint::Pre, MedianPoint::Post)? {
            yp1.push(a);
            yp2.push(b);
            pids.push(id.clone());
        }
    }
    MedianAdcDataset::with_ids(yb1, yb2, yp1, yp2, bids, pids)
}

/// Writes a dataset in the `median.csv` layout (values in 10⁻³ mm²/s).
pub fn write_median_csv<W: Write>(data: &MedianAdcDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["patient", "lesion", "timepoint", "value"])?;
    for (i, id) in data.baseline_ids.iter().enumerate() {
        w.write_record([&id.patient, &id.lesion, "b1", &data.yb1[i].to_string()])?;
        w.write_record([&id.patient, &id.lesion, "b2", &data.yb2[i].to_string()])?;
    }
    for (i, id) in data.post_ids.iter().enumerate() {
        w.write_record([&id.patient, &id.lesion, "pre", &data.yp1[i].to_string()])?;
        w.write_record([&id.patient, &id.lesion, "post", &data.yp2[i].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn count_columns(table: &Table) -> Result<Vec<String>> {
    let mut cols = Vec::new();
    while table.index.contains_key(&format!("c{}", cols.len() + 1)) {
        cols.push(format!("c{}", cols.len() + 1));
    }
    if cols.len() < 2 {
        return Err(parse_error(&table.path, 1, "need count columns c1, c2, ..."));
    }
    Ok(cols)
}

/// Reads `patient,lesion,set,c1,c2,c3` with `set ∈ {baseline, post}`;
/// baseline rows hold the second repeat scan's counts.
pub fn load_habitat_csv(path: &Path) -> Result<HabitatDataset> {
    read_habitat_csv(open(path)?, path)
}

pub fn read_habitat_csv<R: Read>(reader: R, path: &Path) -> Result<HabitatDataset> {
    let table = Table::read(reader, path, &["patient", "lesion", "set"])?;
    let cols = count_columns(&table)?;
    let (mut yb, mut yp, mut bids, mut pids) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut seen: HashMap<(LesionId, bool), u64> = HashMap::new();
    for (line, rec) in &table.rows {
        let line = *line;
        let id = LesionId::new(table.get(rec, line, "patient")?, table.get(rec, line, "lesion")?);
        let post = match table.get(rec, line, "set")?.to_ascii_lowercase().as_str() {
            "baseline" => false,
            "post" => true,
            other => return Err(parse_error(&table.path, line, format!("unknown set '{other}' (use baseline or post)"))),
        };
        if let Some(first) = seen.insert((id.clone(), post), line) {
            return Err(parse_error(&table.path, line, format!("duplicate lesion {id} first seen on line {first}")));
        }
        let counts = cols
            .iter()
            .map(|c| table.count(rec, line, c))
            .collect::<Result<Vec<_>>>()?;
        let counts = CountVec::new(counts).map_err(|e| parse_error(&table.path, line, e.to_string()))?;
        if post {
            yp.push(counts);
            pids.push(id);
        } else {
            yb.push(counts);
            bids.push(id);
        }
    }
    let mu0 = if cols.len() == 3 {
        HabitatDataset::default_mu0()
    } else {
        return Err(parse_error(&table.path, 1, "habitat files need exactly three count columns"));
    };
    HabitatDataset::with_ids(mu0, yb, yp, bids, pids)
}

pub fn write_habitat_csv<W: Write>(data: &HabitatDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["patient".to_string(), "lesion".into(), "set".into()];
    header.extend((1..=data.k()).map(|i| format!("c{i}")));
    w.write_record(&header)?;
    for (set, ids, rows) in [("baseline", &data.baseline_ids, &data.yb), ("post", &data.post_ids, &data.yp)] {
        for (id, c) in ids.iter().zip(rows) {
            let mut rec = vec![id.patient.clone(), id.lesion.clone(), set.to_string()];
            rec.extend(c.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Timepoint {
    Baseline1,
    Baseline2,
    Post,
}

impl std::str::FromStr for Timepoint {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline1" | "b1" => Ok(Timepoint::Baseline1),
            "baseline2" | "b2" => Ok(Timepoint::Baseline2),
            "post" => Ok(Timepoint::Post),
            other => Err(Error::data(format!("unknown timepoint '{other}'"))),
        }
    }
}

impl Timepoint {
    fn as_str(&self) -> &'static str {
        match self {
            Timepoint::Baseline1 => "baseline1",
            Timepoint::Baseline2 => "baseline2",
            Timepoint::Post => "post",
        }
    }
}

/// Voxel values of one lesion at one timepoint, in 10⁻³ mm²/s.
#[derive(Debug, Clone, PartialEq)]
pub struct LesionVoxelRecord {
    pub id: LesionId,
    pub timepoint: Timepoint,
    pub values: Vec<f64>,
}

/// Reads `patient,lesion,timepoint,adc` with one voxel per row. Records are
/// ordered by lesion (first appearance) and then timepoint.
pub fn load_voxels_csv(path: &Path, units: Units) -> Result<Vec<LesionVoxelRecord>> {
    read_voxels_csv(open(path)?, path, units)
}

pub fn read_voxels_csv<R: Read>(reader: R, path: &Path, units: Units) -> Result<Vec<LesionVoxelRecord>> {
    let table = Table::read(reader, path, &["patient", "lesion", "timepoint", "adc"])?;
    let mut order: Vec<LesionId> = Vec::new();
    let mut seen: HashSet<LesionId> = HashSet::new();
    let mut groups: BTreeMap<(usize, Timepoint), Vec<f64>> = BTreeMap::new();
    let mut position: HashMap<LesionId, usize> = HashMap::new();
    for (line, rec) in &table.rows {
        let line = *line;
        let id = LesionId::new(table.get(rec, line, "patient")?, table.get(rec, line, "lesion")?);
        let tp: Timepoint = table
            .get(rec, line, "timepoint")?
            .parse()
            .map_err(|e: Error| parse_error(&table.path, line, e.to_string()))?;
        let v = table.adc(rec, line, "adc", units)?;
        if seen.insert(id.clone()) {
            position.insert(id.clone(), order.len());
            order.push(id.clone());
        }
        groups.entry((position[&id], tp)).or_default().push(v);
    }
    Ok(groups
        .into_iter()
        .map(|((i, timepoint), values)| LesionVoxelRecord {
            id: order[i].clone(),
            timepoint,
            values,
        })
        .collect())
}

pub fn write_voxels_csv<W: Write>(records: &[LesionVoxelRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["patient", "lesion", "timepoint", "adc"])?;
    for r in records {
        for v in &r.values {
            w.write_record([&r.id.patient, &r.id.lesion, r.timepoint.as_str(), &v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Habitat bin edges for one lesion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub low: f64,
    pub high: f64,
    /// Set when both edges coincide (constant voxel values).
    pub degenerate: bool,
}

/// Type-7 percentiles `p_low` and `p_high` (in percent) of baseline voxels.
pub fn percentile_thresholds(values: &[f64], p_low: f64, p_high: f64) -> Result<Thresholds> {
    if values.len() < 10 {
        return Err(Error::data(format!("need at least 10 voxels for habitat thresholds, got {}", values.len())));
    }
    if !(0.0..=100.0).contains(&p_low) || !(p_low..=100.0).contains(&p_high) {
        return Err(Error::domain(format!("invalid percentiles ({p_low}, {p_high})")));
    }
    let sorted = stats::sorted(values);
    let low = stats::quantile_sorted(&sorted, p_low / 100.0);
    let high = stats::quantile_sorted(&sorted, p_high / 100.0);
    Ok(Thresholds {
        low,
        high,
        degenerate: low == high,
    })
}

/// Counts voxels below `low`, within `[low, high]`, and above `high`.
pub fn habitat_counts(values: &[f64], thresholds: &Thresholds) -> Result<CountVec> {
    let mut c = [0u64; 3];
    for &v in values {
        let bin = if v < thresholds.low {
            0
        } else if v > thresholds.high {
            2
        } else {
            1
        };
        c[bin] += 1;
    }
    CountVec::new(c.to_vec())
}

/// Which baseline scans define the habitat thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ThresholdSource {
    #[default]
    FirstBaseline,
    PooledBaselines,
}

/// Per-lesion habitat counts built from voxel records: thresholds from the
/// baseline scan(s), a `baseline` row from the second baseline scan and a
/// `post` row from the post-treatment scan when present.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedHabitats {
    pub baseline: Vec<(LesionId, CountVec)>,
    pub post: Vec<(LesionId, CountVec)>,
    pub thresholds: Vec<(LesionId, Thresholds)>,
}

impl ExtractedHabitats {
    pub fn into_dataset(self) -> Result<HabitatDataset> {
        let (bids, yb): (Vec<_>, Vec<_>) = self.baseline.into_iter().unzip();
        let (pids, yp): (Vec<_>, Vec<_>) = self.post.into_iter().unzip();
        HabitatDataset::with_ids(HabitatDataset::default_mu0(), yb, yp, bids, pids)
    }
}

pub fn extract_habitats(records: &[LesionVoxelRecord], source: ThresholdSource) -> Result<ExtractedHabitats> {
    let mut by_lesion: Vec<(LesionId, BTreeMap<Timepoint, &[f64]>)> = Vec::new();
    for r in records {
        match by_lesion.iter_mut().find(|(id, _)| *id == r.id) {
            Some((_, m)) => {
                m.insert(r.timepoint, &r.values);
            }
            None => by_lesion.push((r.id.clone(), BTreeMap::from([(r.timepoint, r.values.as_slice())]))),
        }
    }
    let mut out = ExtractedHabitats {
        baseline: Vec::new(),
        post: Vec::new(),
        thresholds: Vec::new(),
    };
    for (id, scans) in by_lesion {
        let first = scans
            .get(&Timepoint::Baseline1)
            .ok_or_else(|| Error::data(format!("lesion {id} has no baseline1 voxels")))?;
        let reference: Vec<f64> = match source {
            ThresholdSource::FirstBaseline => first.to_vec(),
            ThresholdSource::PooledBaselines => first
                .iter()
                .chain(scans.get(&Timepoint::Baseline2).copied().unwrap_or(&[]))
                .copied()
                .collect(),
        };
        let t = percentile_thresholds(&reference, 10.0, 90.0)
            .map_err(|e| Error::data(format!("lesion {id}: {e}")))?;
        if let Some(v) = scans.get(&Timepoint::Baseline2) {
            out.baseline.push((id.clone(), habitat_counts(v, &t)?));
        }
        if let Some(v) = scans.get(&Timepoint::Post) {
            out.post.push((id.clone(), habitat_counts(v, &t)?));
        }
        out.thresholds.push((id, t));
    }
    Ok(out)
}

/// Plane coordinates of a 3-simplex `(a, b, c)` in the unit-edge triangle
/// with vertices `(0, 0)`, `(1, 0)`, `(1/2, √3/2)`.
pub fn barycentric(simplex: &[f64]) -> Result<(f64, f64)> {
    if simplex.len() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            found: simplex.len(),
        });
    }
    let (b, c) = (simplex[1], simplex[2]);
    Ok((b + 0.5 * c, 0.5 * 3f64.sqrt() * c))
}

/// Inverse of [`barycentric`]; entries are negative outside the triangle.
pub fn from_barycentric(x: f64, y: f64) -> Vec<f64> {
    let c = 2.0 * y / 3f64.sqrt();
    let b = x - 0.5 * c;
    vec![1.0 - b - c, b, c]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn barycentric_vertices() {
        assert_eq!(barycentric(&[1.0, 0.0, 0.0]).unwrap(), (0.0, 0.0));
        let (x, y) = barycentric(&[0.0, 0.0, 1.0]).unwrap();
        assert!((x - 0.5).abs() < 1e-15 && (y - 0.866_025_4).abs() < 1e-7);
        let (x, y) = barycentric(&[1.0 / 3.0; 3]).unwrap();
        assert!((x - 0.5).abs() < 1e-15 && (y - 0.288_675_1).abs() < 1e-7);
        assert!(barycentric(&[0.5, 0.5]).is_err());
    }

    #[test]
    fn thresholds_type7() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let t = percentile_thresholds(&v, 10.0, 90.0).unwrap();
        assert!((t.low - 10.9).abs() < 1e-12 && (t.high - 90.1).abs() < 1e-12);
        let t = percentile_thresholds(&[2.0; 20], 10.0, 90.0).unwrap();
        assert!(t.degenerate);
        assert!(percentile_thresholds(&[1.0; 9], 10.0, 90.0).is_err());
    }

    #[test]
    fn boundary_values_go_to_middle_bin() {
        let t = Thresholds {
            low: 1.0,
            high: 2.0,
            degenerate: false,
        };
        let c = habitat_counts(&[0.5, 1.0, 1.5, 2.0, 2.5, 3.0], &t).unwrap();
        assert_eq!(c.as_slice(), &[1, 3, 2]);
    }

    #[test]
    fn units_parse() {
        assert_eq!("mm2/s".parse::<Units>().unwrap(), Units::Mm2PerS);
        assert_eq!("1e-3mm2/s".parse::<Units>().unwrap(), Units::MilliMm2PerS);
        assert!("cm".parse::<Units>().is_err());
    }

    #[test]
    fn median_csv_rejects_duplicates_and_negatives() {
        let p = Path::new("median.csv");
        let dup = "patient,lesion,timepoint,value\n1,1,b1,1.0\n1,1,b1,1.1\n";
        match read_median_csv(dup.as_bytes(), p, IngestOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let neg = "patient,lesion,timepoint,value\n1,1,b1,-1.0\n";
        match read_median_csv(neg.as_bytes(), p, IngestOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
