//! Exogenous inputs on a fixed time grid: ambient temperature, solar
//! irradiance and the resulting internal + solar heat gains.

use std::f64::consts::PI;
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, TimeZone, Timelike, Utc, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::thermal::DisturbanceSample;

/// Control interval, s.
pub const STEP_SECONDS: f64 = 900.0;
/// Samples per day on the 900 s grid.
pub const SLOTS_PER_DAY: usize = 96;
/// Samples in a 365-day year.
pub const YEAR_STEPS: usize = 365 * SLOTS_PER_DAY;

pub const WEATHER_HEADER: [&str; 3] = ["timestamp", "t_amb_c", "solar_wm2"];

/// Time-indexed disturbances. Indexing wraps around at the end of the series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSeries {
    pub start: DateTime<Utc>,
    /// Grid spacing, s.
    pub step: f64,
    pub t_amb: Vec<f64>,
    /// Total internal + solar gains, W.
    pub q_gain: Vec<f64>,
    /// Irradiance on the glazing, W/m². Kept for gain synthesis.
    pub solar: Vec<f64>,
}

impl DisturbanceSeries {
    pub fn new(start: DateTime<Utc>, step: f64, t_amb: Vec<f64>, solar: Vec<f64>) -> Result<Self> {
        let q_gain = vec![0.0; t_amb.len()];
        let s = Self {
            start,
            step,
            t_amb,
            q_gain,
            solar,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_amb.is_empty() {
            return Err(Error::Empty("disturbance series"));
        }
        if !(self.step > 0.0) {
            return Err(Error::param("step", format!("must be positive, got {}", self.step)));
        }
        for (what, len) in [("q_gain", self.q_gain.len()), ("solar", self.solar.len())] {
            if len != self.t_amb.len() {
                return Err(Error::LengthMismatch {
                    what,
                    left: self.t_amb.len(),
                    right: len,
                });
            }
        }
        if self.q_gain.iter().any(|q| !(*q >= 0.0)) {
            return Err(Error::param("q_gain", "gains must be non-negative"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.t_amb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_amb.is_empty()
    }

    /// Sample `k`, wrapping around the end of the series.
    pub fn sample(&self, k: usize) -> DisturbanceSample {
        let i = k % self.t_amb.len();
        DisturbanceSample {
            t_amb: self.t_amb[i],
            q_gain: self.q_gain[i],
        }
    }

    /// `n` consecutive samples starting at `k` (wrapping).
    pub fn window(&self, k: usize, n: usize) -> Vec<DisturbanceSample> {
        (k..k + n).map(|i| self.sample(i)).collect()
    }

    pub fn timestamp(&self, k: usize) -> DateTime<Utc> {
        self.start + Duration::milliseconds((k as f64 * self.step * 1000.0).round() as i64)
    }

    /// Replace the gains sequence.
    pub fn with_gains(mut self, q_gain: Vec<f64>) -> Result<Self> {
        self.q_gain = q_gain;
        self.validate()?;
        Ok(self)
    }
}

/// Read a weather file with header `timestamp,t_amb_c,solar_wm2` and rows on
/// a 900 s grid. Gains are left at zero.
pub fn load_weather_csv(path: impl AsRef<Path>) -> Result<DisturbanceSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };

    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r?,
        None => return Err(parse_err(1, "empty file".into())),
    };
    if header.iter().collect::<Vec<_>>() != WEATHER_HEADER {
        return Err(parse_err(
            1,
            format!("bad header, expected `{}`", WEATHER_HEADER.join(",")),
        ));
    }

    let mut start: Option<DateTime<Utc>> = None;
    let mut prev: Option<DateTime<Utc>> = None;
    let mut t_amb = Vec::new();
    let mut solar = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != 3 {
            return Err(parse_err(line, format!("expected 3 fields, got {}", rec.len())));
        }
        let ts = DateTime::parse_from_rfc3339(&rec[0])
            .map_err(|e| parse_err(line, format!("bad timestamp `{}`: {e}", &rec[0])))?
            .with_timezone(&Utc);
        let ta: f64 = rec[1]
            .parse()
            .map_err(|_| parse_err(line, format!("bad t_amb_c `{}`", &rec[1])))?;
        let sol: f64 = rec[2]
            .parse()
            .map_err(|_| parse_err(line, format!("bad solar_wm2 `{}`", &rec[2])))?;
        if !ta.is_finite() || !sol.is_finite() || sol < 0.0 {
            return Err(parse_err(line, "values must be finite, solar non-negative".into()));
        }
        if let Some(p) = prev {
            let delta = (ts - p).num_seconds();
            if delta <= 0 {
                return Err(parse_err(line, format!("non-monotone timestamp {ts}")));
            }
            if delta != STEP_SECONDS as i64 {
                return Err(parse_err(
                    line,
                    format!("gap of {delta} s before this row (expected {STEP_SECONDS} s)"),
                ));
            }
        }
        start.get_or_insert(ts);
        prev = Some(ts);
        t_amb.push(ta);
        solar.push(sol);
    }
    let start = start.ok_or_else(|| parse_err(2, "no data rows".into()))?;
    DisturbanceSeries::new(start, STEP_SECONDS, t_amb, solar)
}

/// Write ambient temperature and irradiance in the weather CSV format.
pub fn write_weather_csv(series: &DisturbanceSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(WEATHER_HEADER)?;
    for k in 0..series.len() {
        w.write_record([
            series.timestamp(k).format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            format!("{:?}", series.t_amb[k]),
            format!("{:?}", series.solar[k]),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Parameters of the synthetic weather generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthWeather {
    pub annual_mean: f64,
    pub annual_amp: f64,
    pub daily_amp: f64,
    /// AR(1) coefficient per 900 s step.
    pub ar_phi: f64,
    /// Stationary standard deviation of the AR(1) noise, K.
    pub ar_sigma: f64,
    /// Peak irradiance at midwinter and midsummer, W/m².
    pub solar_peak_winter: f64,
    pub solar_peak_summer: f64,
}

impl Default for SynthWeather {
    fn default() -> Self {
        Self {
            annual_mean: 8.0,
            annual_amp: 10.0,
            daily_amp: 4.0,
            ar_phi: 0.95,
            ar_sigma: 0.5,
            solar_peak_winter: 100.0,
            solar_peak_summer: 600.0,
        }
    }
}

pub fn synth_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap()
}

impl SynthWeather {
    /// Noise-free part of the ambient temperature at sample `k`.
    pub fn deterministic_t_amb(&self, k: usize) -> f64 {
        let seconds = k as f64 * STEP_SECONDS;
        let day = seconds / 86_400.0;
        let hour = (seconds % 86_400.0) / 3600.0;
        self.annual_mean
            + self.annual_amp * (2.0 * PI * day / 365.0 - PI / 2.0).sin()
            + self.daily_amp * (2.0 * PI * hour / 24.0 - PI / 2.0).sin()
    }

    /// Clear-sky irradiance shape: a half-cosine around noon whose height
    /// and width follow the season.
    pub fn solar(&self, k: usize) -> f64 {
        let seconds = k as f64 * STEP_SECONDS;
        let day = seconds / 86_400.0;
        let hour = (seconds % 86_400.0) / 3600.0;
        let season = 0.5 - 0.5 * (2.0 * PI * day / 365.0).cos();
        let peak = self.solar_peak_winter + (self.solar_peak_summer - self.solar_peak_winter) * season;
        let half_day = 4.0 + 4.0 * season;
        let x = (hour - 12.0) / half_day;
        if x.abs() >= 1.0 {
            0.0
        } else {
            peak * (0.5 * PI * x).cos()
        }
    }

    pub fn generate(&self, seed: u64, days: usize) -> Result<DisturbanceSeries> {
        if days == 0 {
            return Err(Error::param("days", "must be at least 1"));
        }
        if !(self.ar_phi.abs() < 1.0) || !(self.ar_sigma >= 0.0) {
            return Err(Error::param("ar_phi", "AR(1) noise must be stationary with sigma >= 0"));
        }
        let n = days * SLOTS_PER_DAY;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let innovation = self.ar_sigma * (1.0 - self.ar_phi * self.ar_phi).max(0.0).sqrt();
        let mut noise = 0.0;
        let mut t_amb = Vec::with_capacity(n);
        let mut solar = Vec::with_capacity(n);
        for k in 0..n {
            t_amb.push(self.deterministic_t_amb(k) + noise);
            solar.push(self.solar(k));
            let eps: f64 = StandardNormal.sample(&mut rng);
            noise = self.ar_phi * noise + innovation * eps;
        }
        DisturbanceSeries::new(synth_start(), STEP_SECONDS, t_amb, solar)
    }
}

/// Synthetic weather with default parameters.
pub fn synth_weather(seed: u64, days: usize) -> Result<DisturbanceSeries> {
    SynthWeather::default().generate(seed, days)
}

/// Occupancy and appliance gains, W per m² of floor, per 15-minute slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancySchedule {
    pub weekday: Vec<f64>,
    pub weekend: Vec<f64>,
}

impl Default for OccupancySchedule {
    fn default() -> Self {
        let day: Vec<f64> = (0..SLOTS_PER_DAY)
            .map(|slot| {
                let hour = slot / 4;
                if (6..9).contains(&hour) || (17..23).contains(&hour) {
                    3.0
                } else {
                    1.0
                }
            })
            .collect();
        Self {
            weekday: day.clone(),
            weekend: day,
        }
    }
}

impl OccupancySchedule {
    pub fn constant(w_per_m2: f64) -> Self {
        Self {
            weekday: vec![w_per_m2; SLOTS_PER_DAY],
            weekend: vec![w_per_m2; SLOTS_PER_DAY],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("weekday", &self.weekday), ("weekend", &self.weekend)] {
            if v.len() != SLOTS_PER_DAY {
                return Err(Error::param(
                    name,
                    format!("schedule needs {SLOTS_PER_DAY} slots, got {}", v.len()),
                ));
            }
            if let Some(bad) = v.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
                return Err(Error::param(name, format!("negative or non-finite entry {bad}")));
            }
        }
        Ok(())
    }

    pub fn at(&self, t: DateTime<Utc>) -> f64 {
        let slot = (t.hour() * 4 + t.minute() / 15) as usize;
        match t.weekday() {
            Weekday::Sat | Weekday::Sun => self.weekend[slot % SLOTS_PER_DAY],
            _ => self.weekday[slot % SLOTS_PER_DAY],
        }
    }
}

/// Glazing used for solar gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolarAperture {
    /// Window area, m².
    pub window_area: f64,
    /// Total solar energy transmittance of the glazing.
    pub g_value: f64,
}

/// Gains per sample: `a_floor·schedule(t) + window_area·g_value·solar`.
pub fn gains_profile(
    a_floor: f64,
    series: &DisturbanceSeries,
    schedule: &OccupancySchedule,
    aperture: SolarAperture,
) -> Result<Vec<f64>> {
    schedule.validate()?;
    if !(aperture.window_area >= 0.0 && aperture.g_value >= 0.0) {
        return Err(Error::param("window_area/g_value", "must be non-negative"));
    }
    Ok((0..series.len())
        .map(|k| {
            a_floor * schedule.at(series.timestamp(k))
                + aperture.window_area * aperture.g_value * series.solar[k]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        let mut f = std::fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn loads_small_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "w.csv",
            "timestamp,t_amb_c,solar_wm2\n2023-01-01T00:00:00Z,1.5,0\n2023-01-01T00:15:00Z,1.25,10\n",
        );
        let s = load_weather_csv(&p).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.t_amb, vec![1.5, 1.25]);
        assert_eq!(s.solar, vec![0.0, 10.0]);
        assert_eq!(s.q_gain, vec![0.0, 0.0]);
        assert_eq!(s.sample(2), s.sample(0));
    }

    #[test]
    fn rejects_gap_with_row_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "w.csv",
            "timestamp,t_amb_c,solar_wm2\n2023-01-01T00:00:00Z,1,0\n2023-01-01T00:30:00Z,1,0\n",
        );
        let err = load_weather_csv(&p).unwrap_err();
        match err {
            Error::Parse { line, reason, .. } => {
                assert_eq!(line, 3);
                assert!(reason.contains("gap of 1800"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_header_and_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "time,t,s\n2023-01-01T00:00:00Z,1,0\n");
        assert!(matches!(load_weather_csv(&p), Err(Error::Parse { line: 1, .. })));
        let p = write(
            &dir,
            "b.csv",
            "timestamp,t_amb_c,solar_wm2\n2023-01-01T00:15:00Z,1,0\n2023-01-01T00:00:00Z,1,0\n",
        );
        let err = load_weather_csv(&p).unwrap_err();
        assert!(err.to_string().contains("non-monotone"), "{err}");
        let p = write(&dir, "c.csv", "timestamp,t_amb_c,solar_wm2\n2023-01-01T00:00:00Z,abc,0\n");
        assert!(matches!(load_weather_csv(&p), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(
            load_weather_csv(dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn annual_file_round_trip_and_wrap() {
        let dir = tempfile::tempdir().unwrap();
        let s = synth_weather(3, 365).unwrap();
        let p = dir.path().join("year.csv");
        write_weather_csv(&s, &p).unwrap();
        let back = load_weather_csv(&p).unwrap();
        assert_eq!(back.len(), 35_040);
        assert_eq!(back.len(), YEAR_STEPS);
        assert_eq!(back.t_amb, s.t_amb);
        assert_eq!(back.sample(35_040), back.sample(0));
    }

    #[test]
    fn synth_is_deterministic_and_noise_free_variant_is_closed_form() {
        assert_eq!(synth_weather(7, 3).unwrap(), synth_weather(7, 3).unwrap());
        assert_ne!(synth_weather(7, 3).unwrap().t_amb, synth_weather(8, 3).unwrap().t_amb);
        let gen = SynthWeather {
            ar_sigma: 0.0,
            ..Default::default()
        };
        let s = gen.generate(1, 2).unwrap();
        for k in 0..s.len() {
            let seconds = k as f64 * 900.0;
            let day = seconds / 86400.0;
            let hour = (seconds % 86400.0) / 3600.0;
            let expect = 8.0
                + 10.0 * (2.0 * PI * day / 365.0 - PI / 2.0).sin()
                + 4.0 * (2.0 * PI * hour / 24.0 - PI / 2.0).sin();
            assert_eq!(s.t_amb[k], expect);
        }
        assert!(synth_weather(1, 0).is_err());
    }

    #[test]
    fn synth_year_stays_in_band() {
        let s = synth_weather(1, 365).unwrap();
        let min = s.t_amb.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = s.t_amb.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(min >= -10.0 && max <= 26.0, "min {min} max {max}");
    }

    #[test]
    fn gains_examples() {
        let s = DisturbanceSeries::new(synth_start(), 900.0, vec![0.0; 4], vec![0.0; 4]).unwrap();
        let none = SolarAperture {
            window_area: 0.0,
            g_value: 0.6,
        };
        let g = gains_profile(200.0, &s, &OccupancySchedule::constant(0.0), none).unwrap();
        assert_eq!(g, vec![0.0; 4]);
        let g = gains_profile(200.0, &s, &OccupancySchedule::constant(3.0), none).unwrap();
        assert_eq!(g, vec![600.0; 4]);
        let sunny = DisturbanceSeries::new(synth_start(), 900.0, vec![0.0; 2], vec![500.0; 2]).unwrap();
        let ap = SolarAperture {
            window_area: 20.0,
            g_value: 0.6,
        };
        let g = gains_profile(200.0, &sunny, &OccupancySchedule::constant(0.0), ap).unwrap();
        assert!(g.iter().all(|x| (x - 6000.0).abs() < 1e-9));
        let mut bad = OccupancySchedule::constant(1.0);
        bad.weekday[5] = -1.0;
        assert!(gains_profile(200.0, &s, &bad, ap).is_err());
    }

    #[test]
    fn default_schedule_shape() {
        let sched = OccupancySchedule::default();
        // 2023-01-02 is a Monday.
        let monday = Utc.with_ymd_and_hms(2023, 1, 2, 7, 30, 0).unwrap();
        assert_eq!(sched.at(monday), 3.0);
        assert_eq!(sched.at(monday + Duration::hours(5)), 1.0);
        assert_eq!(sched.at(monday + Duration::hours(15)), 3.0);
        assert_eq!(sched.at(monday + Duration::hours(16)), 1.0);
    }
}
