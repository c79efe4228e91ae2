//! Phenological dates from the derivatives of an annual trend curve.
//!
//! | date | criterion                    | τ'' | τ''' | τ'''' |
//! |------|------------------------------|-----|------|-------|
//! | GU   | global max of τ''            |     | 0    | −     |
//! | SoS  | global max of τ'             | 0   | −    |       |
//! | Mat  | global min of τ''            |     | 0    | +     |
//! | Sen  | local min of τ''             |     | 0    | +     |
//! | EoS  | global min of τ'             | 0   | +    |       |
//! | Dor  | local max of τ''             |     | 0    | −     |
//!
//! The global maximum of τ'' is read as green-up when it precedes the start
//! of season and as dormancy otherwise; the other date of that pair is then
//! the best remaining local maximum on the matching side.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpca::TrendCurve;
use crate::harmonic::{fit_harmonic_at, HarmonicModel};

/// Default number of points of the dense evaluation grid.
pub const DEFAULT_DENSE_N: usize = 3650;

/// Days in the reporting year.
pub const DAYS_PER_YEAR: f64 = 365.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "GU")]
    GreenUp,
    #[serde(rename = "SoS")]
    StartOfSeason,
    #[serde(rename = "Mat")]
    Maturity,
    #[serde(rename = "Sen")]
    Senescence,
    #[serde(rename = "EoS")]
    EndOfSeason,
    #[serde(rename = "Dor")]
    Dormancy,
}

impl Phase {
    /// Canonical chronological order.
    pub const ALL: [Phase; 6] = [
        Phase::GreenUp,
        Phase::StartOfSeason,
        Phase::Maturity,
        Phase::Senescence,
        Phase::EndOfSeason,
        Phase::Dormancy,
    ];

    pub fn abbrev(self) -> &'static str {
        match self {
            Phase::GreenUp => "GU",
            Phase::StartOfSeason => "SoS",
            Phase::Maturity => "Mat",
            Phase::Senescence => "Sen",
            Phase::EndOfSeason => "EoS",
            Phase::Dormancy => "Dor",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_abbrev(s: &str) -> Option<Phase> {
        Phase::ALL.into_iter().find(|p| p.abbrev() == s)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbrev())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DateFlag {
    OrderingViolated,
    SenEqualsMat,
    #[serde(rename = "MissingGU")]
    MissingGu,
    MissingDor,
    MissingSen,
    SignConditionFailed(Phase),
}

impl fmt::Display for DateFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DateFlag::OrderingViolated => f.write_str("OrderingViolated"),
            DateFlag::SenEqualsMat => f.write_str("SenEqualsMat"),
            DateFlag::MissingGu => f.write_str("MissingGU"),
            DateFlag::MissingDor => f.write_str("MissingDor"),
            DateFlag::MissingSen => f.write_str("MissingSen"),
            DateFlag::SignConditionFailed(p) => write!(f, "SignConditionFailed({p})"),
        }
    }
}

impl DateFlag {
    pub fn parse(s: &str) -> Option<DateFlag> {
        Some(match s {
            "OrderingViolated" => DateFlag::OrderingViolated,
            "SenEqualsMat" => DateFlag::SenEqualsMat,
            "MissingGU" => DateFlag::MissingGu,
            "MissingDor" => DateFlag::MissingDor,
            "MissingSen" => DateFlag::MissingSen,
            _ => {
                let inner = s.strip_prefix("SignConditionFailed(")?.strip_suffix(')')?;
                DateFlag::SignConditionFailed(Phase::from_abbrev(inner)?)
            }
        })
    }
}

/// Six optional dates on `[0, period]` plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PhenoDates {
    period: f64,
    positions: [Option<f64>; 6],
    pub flags: BTreeSet<DateFlag>,
}

impl PhenoDates {
    pub fn empty(period: f64) -> Self {
        Self {
            period,
            positions: [None; 6],
            flags: BTreeSet::new(),
        }
    }

    /// Dates given directly as days of year (period 365).
    pub fn from_doys(doys: [Option<u32>; 6]) -> Self {
        let mut d = Self::empty(DAYS_PER_YEAR);
        for (p, v) in Phase::ALL.into_iter().zip(doys) {
            if let Some(v) = v {
                d.set(p, v as f64);
            }
        }
        d
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn set(&mut self, phase: Phase, position: f64) {
        self.positions[phase.index()] = Some(position);
    }

    pub fn clear(&mut self, phase: Phase) {
        self.positions[phase.index()] = None;
    }

    pub fn position(&self, phase: Phase) -> Option<f64> {
        self.positions[phase.index()]
    }

    pub fn positions(&self) -> &[Option<f64>; 6] {
        &self.positions
    }

    pub fn doy(&self, phase: Phase) -> Option<u32> {
        self.position(phase).map(|p| doy_clamped(p, self.period))
    }

    pub fn doys(&self) -> [Option<u32>; 6] {
        Phase::ALL.map(|p| self.doy(p))
    }

    pub fn has(&self, flag: DateFlag) -> bool {
        self.flags.contains(&flag)
    }

    pub fn to_record(&self) -> PhenoRecord {
        PhenoRecord {
            period: self.period,
            dates: Phase::ALL
                .into_iter()
                .map(|p| DateEntry {
                    phase: p,
                    position: self.position(p),
                    doy: self.doy(p),
                })
                .collect(),
            flags: self.flags.iter().map(ToString::to_string).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_record())?)
    }

    pub fn csv_header() -> Vec<String> {
        let mut h: Vec<String> = Phase::ALL.iter().map(|p| format!("{p}_doy")).collect();
        h.push("flags".into());
        h
    }

    /// One CSV row: six DoY cells (empty when absent) and `;`-joined flags.
    pub fn csv_row(&self) -> Vec<String> {
        let mut row: Vec<String> = self
            .doys()
            .iter()
            .map(|d| d.map_or_else(String::new, |v| v.to_string()))
            .collect();
        row.push(self.flags_string());
        row
    }

    pub fn flags_string(&self) -> String {
        self.flags.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
    }
}

/// Serialized form of [`PhenoDates`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhenoRecord {
    pub period: f64,
    pub dates: Vec<DateEntry>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DateEntry {
    pub phase: Phase,
    pub position: Option<f64>,
    pub doy: Option<u32>,
}

/// Day of year for a position on `[0, period]`: `round(365 * x / L)` clamped to `1..=365`.
pub fn to_doy(position: f64, period: f64) -> Result<u32> {
    if !(0.0..=period).contains(&position) {
        return Err(Error::Contract(format!(
            "position {position} outside [0, {period}]"
        )));
    }
    Ok(doy_clamped(position, period))
}

fn doy_clamped(position: f64, period: f64) -> u32 {
    (DAYS_PER_YEAR * position / period).round().clamp(1.0, DAYS_PER_YEAR) as u32
}

/// True when the present dates are strictly increasing in canonical order.
/// Absent dates are skipped.
pub fn check_ordering(dates: &PhenoDates) -> (bool, BTreeSet<DateFlag>) {
    // a senescence date that merely repeats maturity carries no order information
    let skip_sen = dates.has(DateFlag::SenEqualsMat);
    let present: Vec<f64> = Phase::ALL
        .iter()
        .filter(|p| !(skip_sen && **p == Phase::Senescence))
        .filter_map(|p| dates.position(*p))
        .collect();
    let ok = present.windows(2).all(|w| w[0] < w[1]);
    let mut flags = BTreeSet::new();
    if !ok {
        flags.insert(DateFlag::OrderingViolated);
    }
    (ok, flags)
}

/// The fitted harmonic model and its first four derivatives.
#[derive(Debug, Clone)]
pub struct DerivativeSet {
    pub model: HarmonicModel,
    pub derivs: [HarmonicModel; 4],
}

impl DerivativeSet {
    pub fn new(model: HarmonicModel) -> Result<Self> {
        let derivs = [
            model.derivative(1)?,
            model.derivative(2)?,
            model.derivative(3)?,
            model.derivative(4)?,
        ];
        Ok(Self { model, derivs })
    }

    /// Derivative of order `nu` (1..=4).
    pub fn d(&self, nu: usize) -> &HarmonicModel {
        &self.derivs[nu - 1]
    }
}

/// Fits a harmonic model with `num_freq` frequencies to the trend samples.
pub fn fit_trend_harmonic(trend: &TrendCurve, num_freq: usize) -> Result<HarmonicModel> {
    let n = trend.values.len();
    let times: Vec<f64> = (0..n)
        .map(|i| crate::series::grid_point(i, n) * trend.period)
        .collect();
    Ok(fit_harmonic_at(&times, &trend.values, trend.period, num_freq)?.0)
}

/// Extracts the six dates from a trend curve.
pub fn extract_phenodates(trend: &TrendCurve, num_freq: usize, dense_n: usize) -> Result<PhenoDates> {
    if num_freq == 0 {
        return Err(Error::Contract("num_freq must be at least 1".into()));
    }
    if dense_n < 10 * trend.values.len() {
        return Err(Error::Contract(format!(
            "dense grid of {dense_n} points is coarser than 10 x {} trend samples",
            trend.values.len()
        )));
    }
    let model = fit_trend_harmonic(trend, num_freq)?;
    extract_from_model(&model, dense_n)
}

fn argmax(v: &[f64]) -> usize {
    // earliest index wins ties
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn interior_maxima(v: &[f64]) -> Vec<usize> {
    (1..v.len().saturating_sub(1))
        .filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1])
        .collect()
}

/// Highest candidate by value, earliest on ties.
fn best_of(candidates: impl Iterator<Item = usize>, v: &[f64]) -> Option<usize> {
    candidates.fold(None, |best, i| match best {
        Some(b) if v[b] >= v[i] => Some(b),
        _ => Some(i),
    })
}

/// Date extraction from an already fitted harmonic model.
pub fn extract_from_model(model: &HarmonicModel, dense_n: usize) -> Result<PhenoDates> {
    if dense_n < 3 {
        return Err(Error::Contract(format!("dense_n must be at least 3, got {dense_n}")));
    }
    if model.is_flat() {
        return Err(Error::DegenerateCurve(
            "trend is constant; derivatives vanish identically".into(),
        ));
    }
    let period = model.period();
    let set = DerivativeSet::new(model.clone())?;
    let step = period / (dense_n - 1) as f64;
    let ts: Vec<f64> = (0..dense_n).map(|k| k as f64 * step).collect();
    let eval = |nu: usize| -> Vec<f64> { ts.iter().map(|&t| set.d(nu).eval(t)).collect() };
    let d1 = eval(1);
    let d2 = eval(2);
    let d3 = eval(3);
    let d4 = eval(4);
    let neg = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| -x).collect() };
    let d1n = neg(&d1);
    let d2n = neg(&d2);

    let mut dates = PhenoDates::empty(period);
    let distinct = |a: usize, b: usize| a.abs_diff(b) > 1;

    let sos = argmax(&d1);
    let eos = argmax(&d1n);
    dates.set(Phase::StartOfSeason, ts[sos]);
    dates.set(Phase::EndOfSeason, ts[eos]);

    // maturity and senescence: minima of τ''
    let mat = argmax(&d2n);
    dates.set(Phase::Maturity, ts[mat]);
    let minima = interior_maxima(&d2n);
    let sen = best_of(minima.iter().copied().filter(|&i| distinct(i, mat)), &d2n);
    match sen {
        Some(i) => dates.set(Phase::Senescence, ts[i]),
        None if minima.contains(&mat) => {
            dates.set(Phase::Senescence, ts[mat]);
            dates.flags.insert(DateFlag::SenEqualsMat);
        }
        None => {
            dates.flags.insert(DateFlag::MissingSen);
        }
    }

    // green-up and dormancy: maxima of τ''
    let top = argmax(&d2);
    let maxima = interior_maxima(&d2);
    if top < sos {
        dates.set(Phase::GreenUp, ts[top]);
        match best_of(maxima.iter().copied().filter(|&i| distinct(i, top)), &d2) {
            Some(i) => dates.set(Phase::Dormancy, ts[i]),
            None => {
                dates.flags.insert(DateFlag::MissingDor);
            }
        }
    } else {
        dates.set(Phase::Dormancy, ts[top]);
        match best_of(
            maxima.iter().copied().filter(|&i| i < sos && distinct(i, top)),
            &d2,
        ) {
            Some(i) => dates.set(Phase::GreenUp, ts[i]),
            None => {
                dates.flags.insert(DateFlag::MissingGu);
            }
        }
    }

    check_sign_conditions(&mut dates, &ts, step, [&d1, &d2, &d3, &d4]);
    let (ok, flags) = check_ordering(&dates);
    if !ok {
        dates.flags.extend(flags);
    }
    Ok(dates)
}

#[derive(Clone, Copy)]
enum Expect {
    Zero,
    Neg,
    Pos,
    Any,
}

fn check_sign_conditions(dates: &mut PhenoDates, ts: &[f64], step: f64, d: [&Vec<f64>; 4]) {
    let sup = |v: &Vec<f64>| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let sups = [sup(d[0]), sup(d[1]), sup(d[2]), sup(d[3])];
    // a grid extremum sits within one step of the true critical point
    let zero_tol = |order: usize| {
        let next = if order < 4 { sups[order] } else { sups[3] };
        1.01 * step * next + 1e-12 * sups[order - 1].max(f64::MIN_POSITIVE)
    };
    use Expect::*;
    let table: [(Phase, [Expect; 3]); 6] = [
        (Phase::GreenUp, [Any, Zero, Neg]),
        (Phase::StartOfSeason, [Zero, Neg, Any]),
        (Phase::Maturity, [Any, Zero, Pos]),
        (Phase::Senescence, [Any, Zero, Pos]),
        (Phase::EndOfSeason, [Zero, Pos, Any]),
        (Phase::Dormancy, [Any, Zero, Neg]),
    ];
    for (phase, expects) in table {
        let Some(pos) = dates.position(phase) else {
            continue;
        };
        let k = ((pos / step).round() as usize).min(ts.len() - 1);
        let ok = expects.iter().enumerate().all(|(i, e)| {
            let order = i + 2;
            let v = d[order - 1][k];
            match e {
                Zero => v.abs() <= zero_tol(order),
                Neg => v < 0.0,
                Pos => v > 0.0,
                Any => true,
            }
        });
        if !ok {
            dates.flags.insert(DateFlag::SignConditionFailed(phase));
        }
    }
}
