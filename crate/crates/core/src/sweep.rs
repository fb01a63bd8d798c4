//! Aggregate series over pattern-length sweeps: per-length means with
//! deviation bands, the temperature-0 minus temperature-1 spread, relative
//! means against a base model, and trend classification across model
//! releases.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::similarity::{GroupLabel, SprMatrix, Temperature};

/// Default flatness tolerance (percentage points) below which a successive
/// difference counts as plateau rather than rise or decline.
pub const DEFAULT_FLATNESS_TOLERANCE: f64 = 0.25;

/// What to sweep: the pattern-length range and which (model, temperature)
/// combinations to aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub l_min: usize,
    pub l_max: usize,
    pub temperatures: Vec<Temperature>,
    pub models: Vec<String>,
}

impl SweepConfig {
    pub fn new(models: Vec<String>) -> Self {
        Self {
            l_min: 3,
            l_max: 20,
            temperatures: vec![Temperature::Zero, Temperature::One],
            models,
        }
    }

    pub fn lengths(&self) -> impl Iterator<Item = usize> {
        self.l_min..=self.l_max
    }
}

/// Which matrix cells feed the per-length aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CellSelector {
    /// Ordered pairs of distinct paraphrase groups (the inter-group means).
    #[default]
    ParaphrasePairs,
    /// Coverage of the original text by each paraphrase group.
    OriginalVsParaphrase,
    /// Paraphrase pairs plus the union-semantics diagonal cells.
    ParaphrasePairsWithDiagonal,
}

impl CellSelector {
    pub fn cells(self, labels: &[GroupLabel]) -> Vec<(GroupLabel, GroupLabel)> {
        let groups: Vec<GroupLabel> = labels
            .iter()
            .copied()
            .filter(|l| matches!(l, GroupLabel::Paraphrase(_)))
            .collect();
        let mut cells = Vec::new();
        match self {
            CellSelector::ParaphrasePairs => {
                for &r in &groups {
                    for &c in &groups {
                        if r != c {
                            cells.push((r, c));
                        }
                    }
                }
            }
            CellSelector::OriginalVsParaphrase => {
                for &c in &groups {
                    cells.push((GroupLabel::Original, c));
                }
            }
            CellSelector::ParaphrasePairsWithDiagonal => {
                for &r in &groups {
                    for &c in &groups {
                        cells.push((r, c));
                    }
                }
            }
        }
        cells
    }
}

/// Whether a series aggregates a model's paraphrase cells or the
/// original-versus-control human baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeriesKind {
    Model,
    HumanBaseline,
}

/// Synthetic model id carried by the human-baseline series.
pub const HUMAN_BASELINE_ID: &str = "human-control";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub pattern_len: usize,
    pub mean: f64,
    /// Population standard deviation over the selected cell means.
    pub std: f64,
    /// Number of cells aggregated into this point.
    pub samples: usize,
}

/// Mean-of-means per pattern length for one (model, temperature).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSeries {
    pub model: String,
    pub temperature: Temperature,
    pub kind: SeriesKind,
    pub points: Vec<SweepPoint>,
}

impl SweepSeries {
    pub fn mean_at(&self, l: usize) -> Option<f64> {
        self.points.iter().find(|p| p.pattern_len == l).map(|p| p.mean)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadPoint {
    pub pattern_len: usize,
    /// Temperature-0 mean minus temperature-1 mean.
    pub delta: f64,
    pub mean_t0: f64,
    pub mean_t1: f64,
}

/// Per-length temperature spread of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadSeries {
    pub model: String,
    pub points: Vec<SpreadPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeEntry {
    pub model: String,
    pub pattern_len: usize,
    /// Model mean over base-model mean; `None` where the base mean is zero.
    pub ratio: Option<f64>,
}

/// Per-model means normalized by a base model, at one temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeSeries {
    pub base_model: String,
    pub temperature: Temperature,
    pub entries: Vec<RelativeEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentClass {
    Rising,
    Plateau,
    Declining,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendSegment {
    pub class: SegmentClass,
    pub l_start: usize,
    pub l_end: usize,
}

/// Shape of one model's spread curve across the length sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadShape {
    pub model: String,
    pub segments: Vec<TrendSegment>,
    pub rise_plateau_decline: bool,
}

/// The model-mean sequence in release order at one (temperature, length).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendLine {
    pub temperature: Temperature,
    pub pattern_len: usize,
    pub model_means: Vec<(String, f64)>,
    pub monotone_nondecreasing: bool,
}

/// Everything the trend analysis concludes, ready for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub flatness_tolerance: f64,
    pub trends: Vec<TrendLine>,
    pub spread_shapes: Vec<SpreadShape>,
    pub relatives: Vec<RelativeSeries>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SweepError {
    #[error("no matrix for model {model} at temperature {temperature}, pattern length {pattern_len}")]
    MissingMatrix {
        model: String,
        temperature: Temperature,
        pattern_len: usize,
    },
    #[error("model {model} does not support temperature 0, no spread is defined")]
    TemperatureUnsupported { model: String },
    #[error("series are incompatible: {0}")]
    SeriesMismatch(String),
    #[error("base model {base} is not among the swept series")]
    BaseModelMissing { base: String },
    #[error("cell selector matched no cells")]
    EmptySelection,
}

/// Lookup collection of matrices keyed by (model, temperature, length).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MatrixSet {
    pub matrices: Vec<SprMatrix>,
}

impl MatrixSet {
    pub fn new(matrices: Vec<SprMatrix>) -> Self {
        Self { matrices }
    }

    pub fn get(&self, model: &str, temperature: Temperature, l: usize) -> Option<&SprMatrix> {
        self.matrices
            .iter()
            .find(|m| m.model == model && m.temperature == temperature && m.pattern_len == l)
    }

    pub fn has_combination(&self, model: &str, temperature: Temperature) -> bool {
        self.matrices
            .iter()
            .any(|m| m.model == model && m.temperature == temperature)
    }
}

fn mean_and_population_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, variance.sqrt())
}

/// Aggregate the selected cells of every requested (model, temperature) into
/// per-length series, plus one distinguished human-baseline series (the
/// original-versus-control cell) per temperature.
///
/// Combinations with no matrices at all are skipped (that is how models
/// without temperature-0 support fall out), but a combination that exists for
/// some lengths and not others is an error.
pub fn run_sweep(
    set: &MatrixSet,
    config: &SweepConfig,
    selector: CellSelector,
) -> Result<Vec<SweepSeries>, SweepError> {
    let mut series = Vec::new();
    for temperature in config.temperatures.iter().copied() {
        for model in &config.models {
            if !set.has_combination(model, temperature) {
                continue;
            }
            let mut points = Vec::new();
            for l in config.lengths() {
                let matrix =
                    set.get(model, temperature, l)
                        .ok_or_else(|| SweepError::MissingMatrix {
                            model: model.clone(),
                            temperature,
                            pattern_len: l,
                        })?;
                let cells = selector.cells(&matrix.labels);
                if cells.is_empty() {
                    return Err(SweepError::EmptySelection);
                }
                let values: Vec<f64> = cells
                    .iter()
                    .map(|&(r, c)| {
                        matrix
                            .cell(r, c)
                            .map(|cell| cell.mean)
                            .ok_or_else(|| SweepError::SeriesMismatch(format!(
                                "matrix for {model} t={temperature} l={l} lacks cell ({r}, {c})"
                            )))
                    })
                    .collect::<Result<_, _>>()?;
                let (mean, std) = mean_and_population_std(&values);
                points.push(SweepPoint {
                    pattern_len: l,
                    mean,
                    std,
                    samples: values.len(),
                });
            }
            series.push(SweepSeries {
                model: model.clone(),
                temperature,
                kind: SeriesKind::Model,
                points,
            });
        }

        // Human baseline: original-versus-control does not depend on the
        // model, so take it from the first model present at this temperature.
        if let Some(model) = config
            .models
            .iter()
            .find(|m| set.has_combination(m, temperature))
        {
            let mut points = Vec::new();
            for l in config.lengths() {
                let matrix =
                    set.get(model, temperature, l)
                        .ok_or_else(|| SweepError::MissingMatrix {
                            model: model.clone(),
                            temperature,
                            pattern_len: l,
                        })?;
                let cell = matrix
                    .cell(GroupLabel::Original, GroupLabel::Control)
                    .ok_or_else(|| {
                        SweepError::SeriesMismatch("matrix lacks an original/control cell".into())
                    })?;
                points.push(SweepPoint {
                    pattern_len: l,
                    mean: cell.mean,
                    std: 0.0,
                    samples: 1,
                });
            }
            series.push(SweepSeries {
                model: HUMAN_BASELINE_ID.to_string(),
                temperature,
                kind: SeriesKind::HumanBaseline,
                points,
            });
        }
    }
    Ok(series)
}

/// Difference `d` closest to `m0 - m1` for which `d + m1 == m0` holds in
/// floating point. The plain difference already satisfies this except when
/// both operations round unluckily; a couple of one-ulp nudges repair those
/// cases. Falls back to the plain difference if no representable `d` exists.
pub fn spread_delta(m0: f64, m1: f64) -> f64 {
    let d = m0 - m1;
    if d + m1 == m0 {
        return d;
    }
    let mut candidate = d;
    for _ in 0..4 {
        let err = (candidate + m1) - m0;
        candidate = if err > 0.0 {
            f64_next_down(candidate)
        } else {
            f64_next_up(candidate)
        };
        if candidate + m1 == m0 {
            return candidate;
        }
    }
    d
}

fn f64_next_up(x: f64) -> f64 {
    if x.is_nan() || x == f64::INFINITY {
        return x;
    }
    let bits = x.to_bits();
    f64::from_bits(if x == 0.0 {
        1
    } else if bits >> 63 == 0 {
        bits + 1
    } else {
        bits - 1
    })
}

fn f64_next_down(x: f64) -> f64 {
    -f64_next_up(-x)
}

/// Per-length spread of one model between its temperature-0 and
/// temperature-1 series.
pub fn temperature_spread(
    s0: &SweepSeries,
    s1: &SweepSeries,
) -> Result<SpreadSeries, SweepError> {
    if s0.model != s1.model {
        return Err(SweepError::SeriesMismatch(format!(
            "spread requires one model, got {} and {}",
            s0.model, s1.model
        )));
    }
    if s0.temperature != Temperature::Zero || s1.temperature != Temperature::One {
        return Err(SweepError::SeriesMismatch(
            "spread arguments must be the temperature-0 then temperature-1 series".into(),
        ));
    }
    let lengths0: Vec<usize> = s0.points.iter().map(|p| p.pattern_len).collect();
    let lengths1: Vec<usize> = s1.points.iter().map(|p| p.pattern_len).collect();
    if lengths0 != lengths1 {
        return Err(SweepError::SeriesMismatch(
            "spread series cover different pattern-length ranges".into(),
        ));
    }
    let points = s0
        .points
        .iter()
        .zip(&s1.points)
        .map(|(p0, p1)| SpreadPoint {
            pattern_len: p0.pattern_len,
            delta: spread_delta(p0.mean, p1.mean),
            mean_t0: p0.mean,
            mean_t1: p1.mean,
        })
        .collect();
    Ok(SpreadSeries {
        model: s0.model.clone(),
        points,
    })
}

/// Spreads for every model that has both temperatures in `series`. Models
/// present only at temperature 1 yield [`SweepError::TemperatureUnsupported`]
/// entries in the returned skip list rather than failing the whole batch.
pub fn temperature_spreads(
    series: &[SweepSeries],
) -> Result<(Vec<SpreadSeries>, Vec<SweepError>), SweepError> {
    let mut spreads = Vec::new();
    let mut skipped = Vec::new();
    let models: Vec<&SweepSeries> = series
        .iter()
        .filter(|s| s.kind == SeriesKind::Model)
        .collect();
    let mut seen = Vec::new();
    for s in &models {
        if seen.contains(&&s.model) {
            continue;
        }
        seen.push(&s.model);
        let s0 = models
            .iter()
            .find(|x| x.model == s.model && x.temperature == Temperature::Zero);
        let s1 = models
            .iter()
            .find(|x| x.model == s.model && x.temperature == Temperature::One);
        match (s0, s1) {
            (Some(s0), Some(s1)) => spreads.push(temperature_spread(s0, s1)?),
            _ => skipped.push(SweepError::TemperatureUnsupported {
                model: s.model.clone(),
            }),
        }
    }
    Ok((spreads, skipped))
}

/// Normalize every model series at one temperature by the base model's mean.
pub fn relative_means(
    series: &[SweepSeries],
    base: &str,
) -> Result<RelativeSeries, SweepError> {
    let models: Vec<&SweepSeries> = series
        .iter()
        .filter(|s| s.kind == SeriesKind::Model)
        .collect();
    let base_series = models
        .iter()
        .find(|s| s.model == base)
        .ok_or_else(|| SweepError::BaseModelMissing { base: base.into() })?;
    let temperature = base_series.temperature;
    if let Some(other) = models.iter().find(|s| s.temperature != temperature) {
        return Err(SweepError::SeriesMismatch(format!(
            "relative means mix temperatures: {} is at {}",
            other.model, other.temperature
        )));
    }

    let mut entries = Vec::new();
    for s in &models {
        for point in &s.points {
            let base_mean = base_series.mean_at(point.pattern_len).ok_or_else(|| {
                SweepError::SeriesMismatch(format!(
                    "base model has no point at pattern length {}",
                    point.pattern_len
                ))
            })?;
            let ratio = if base_mean == 0.0 {
                None
            } else if s.model == base {
                Some(1.0)
            } else {
                Some(point.mean / base_mean)
            };
            entries.push(RelativeEntry {
                model: s.model.clone(),
                pattern_len: point.pattern_len,
                ratio,
            });
        }
    }
    Ok(RelativeSeries {
        base_model: base.to_string(),
        temperature,
        entries,
    })
}

fn classify(diff: f64, tolerance: f64) -> SegmentClass {
    if diff.abs() <= tolerance {
        SegmentClass::Plateau
    } else if diff > 0.0 {
        SegmentClass::Rising
    } else {
        SegmentClass::Declining
    }
}

/// Merge successive-difference classes of a per-length curve into segments.
pub fn classify_segments(
    points: &[(usize, f64)],
    tolerance: f64,
) -> Vec<TrendSegment> {
    let mut segments: Vec<TrendSegment> = Vec::new();
    for pair in points.windows(2) {
        let class = classify(pair[1].1 - pair[0].1, tolerance);
        match segments.last_mut() {
            Some(last) if last.class == class => last.l_end = pair[1].0,
            _ => segments.push(TrendSegment {
                class,
                l_start: pair[0].0,
                l_end: pair[1].0,
            }),
        }
    }
    segments
}

/// Assemble the convergence report: per-(temperature, length) model-mean
/// sequences in release order with monotonicity flags, spread-shape
/// classification per model, and the relative series for reference.
pub fn trend_report(
    series: &[SweepSeries],
    spreads: &[SpreadSeries],
    relatives: &[RelativeSeries],
    release_order: &[String],
    flatness_tolerance: f64,
) -> ConvergenceReport {
    let mut trends = Vec::new();
    let lengths: Vec<usize> = series
        .first()
        .map(|s| s.points.iter().map(|p| p.pattern_len).collect())
        .unwrap_or_default();
    for temperature in Temperature::ALL {
        for &l in &lengths {
            let model_means: Vec<(String, f64)> = release_order
                .iter()
                .filter_map(|model| {
                    series
                        .iter()
                        .find(|s| {
                            s.kind == SeriesKind::Model
                                && &s.model == model
                                && s.temperature == temperature
                        })
                        .and_then(|s| s.mean_at(l))
                        .map(|mean| (model.clone(), mean))
                })
                .collect();
            if model_means.is_empty() {
                continue;
            }
            let monotone_nondecreasing = model_means
                .windows(2)
                .all(|w| w[1].1 >= w[0].1);
            trends.push(TrendLine {
                temperature,
                pattern_len: l,
                model_means,
                monotone_nondecreasing,
            });
        }
    }

    let spread_shapes = spreads
        .iter()
        .map(|spread| {
            let curve: Vec<(usize, f64)> = spread
                .points
                .iter()
                .map(|p| (p.pattern_len, p.delta))
                .collect();
            let segments = classify_segments(&curve, flatness_tolerance);
            let classes: Vec<SegmentClass> = segments.iter().map(|s| s.class).collect();
            SpreadShape {
                model: spread.model.clone(),
                rise_plateau_decline: classes
                    == [
                        SegmentClass::Rising,
                        SegmentClass::Plateau,
                        SegmentClass::Declining,
                    ],
                segments,
            }
        })
        .collect();

    ConvergenceReport {
        flatness_tolerance,
        trends,
        spread_shapes,
        relatives: relatives.to_vec(),
    }
}
