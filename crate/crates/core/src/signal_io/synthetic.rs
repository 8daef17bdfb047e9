use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Label, PenRecord, SignalError, SignalSequence};

/// Parameters of the synthetic spiral-drawing generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub n_subjects_per_class: usize,
    pub min_length: usize,
    pub max_length: usize,
    /// 0 gives both classes the same generating distribution; 1 is strongly separable.
    pub class_separation: f64,
    pub seed: u64,
    #[serde(default = "default_task")]
    pub task_id: String,
}

fn default_task() -> String {
    "spiral".to_string()
}

impl SyntheticParams {
    pub fn new(n_subjects_per_class: usize, length_range: (usize, usize), class_separation: f64, seed: u64) -> Self {
        Self {
            n_subjects_per_class,
            min_length: length_range.0,
            max_length: length_range.1,
            class_separation,
            seed,
            task_id: default_task(),
        }
    }
}

const TICKS_PER_SAMPLE: i64 = 5;
const TURNS: f64 = 3.0;
/// Peak relative speed modulation of a PD subject at separation 1.
const TREMOR_SPEED_GAIN: f64 = 0.5;

/// Generates spiral recordings for `n` PD and `n` HC subjects, interleaved PD/HC.
///
/// PD subjects carry a 4-7 Hz oscillation of pen speed whose relative amplitude is
/// `0.5 * class_separation`; everything else is drawn from one distribution for both
/// classes, and random draws are consumed identically regardless of class.
pub fn generate_synthetic(params: &SyntheticParams) -> Result<Vec<SignalSequence>, SignalError> {
    let SyntheticParams { n_subjects_per_class: n, min_length, max_length, class_separation, seed, .. } =
        *params;
    if min_length > max_length {
        return Err(SignalError::InvalidRange { min: min_length, max: max_length });
    }
    if min_length < 8 {
        return Err(SignalError::InvalidParameter(format!("minimum length {min_length} < 8")));
    }
    if !(0.0..=1.0).contains(&class_separation) {
        return Err(SignalError::InvalidParameter(format!("class separation {class_separation} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        for label in [Label::Pd, Label::Hc] {
            let tremor = if label == Label::Pd { TREMOR_SPEED_GAIN * class_separation } else { 0.0 };
            let len = rng.random_range(min_length..=max_length);
            let records = spiral_records(&mut rng, len, tremor);
            let prefix = if label == Label::Pd { "pd" } else { "hc" };
            out.push(SignalSequence::from_pen_records(
                format!("{prefix}-{i:03}"),
                params.task_id.clone(),
                label,
                &records,
            )?);
        }
    }
    Ok(out)
}

fn spiral_records(rng: &mut ChaCha8Rng, len: usize, tremor_gain: f64) -> Vec<PenRecord> {
    let dt = TICKS_PER_SAMPLE as f64 / 1000.0;
    let cx = 5000.0 + rng.random_range(-300.0..300.0);
    let cy = 5000.0 + rng.random_range(-300.0..300.0);
    let r_max = rng.random_range(1500.0..2500.0);
    let theta_max = 2.0 * PI * TURNS;
    let growth = r_max / theta_max;
    let step = theta_max / len as f64;

    let slow_f = rng.random_range(0.3..0.8);
    let slow_phase = rng.random_range(0.0..2.0 * PI);
    let tremor_f = rng.random_range(4.0..7.0);
    let tremor_phase = rng.random_range(0.0..2.0 * PI);

    let p0 = rng.random_range(400.0..800.0);
    let p_f = rng.random_range(0.2..1.0);
    let tilt_x0 = rng.random_range(400.0..500.0);
    let tilt_y0 = rng.random_range(550.0..650.0);
    let lift_start = rng.random_range(len * 2 / 5..=len * 3 / 5);
    let lift_len = rng.random_range(len * 3 / 100..=(len * 8 / 100).max(len * 3 / 100));
    let t0 = 1_000_000 + rng.random_range(0..100_000i64);

    let jitter = Normal::new(0.0, 0.3).expect("valid sigma");
    let p_noise = Normal::new(0.0, 5.0).expect("valid sigma");

    let mut theta = 0.0;
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let t = i as f64 * dt;
        let speed = 1.0
            + 0.05 * (2.0 * PI * slow_f * t + slow_phase).sin()
            + tremor_gain * (2.0 * PI * tremor_f * t + tremor_phase).sin();
        theta += step * speed.max(0.05);
        let r = growth * theta;
        let x = cx + r * theta.cos() + jitter.sample(rng);
        let y = cy + r * theta.sin() + jitter.sample(rng);
        let in_air = i >= lift_start && i < lift_start + lift_len;
        let pressure = if in_air {
            0.0
        } else {
            (p0 + 100.0 * (2.0 * PI * p_f * t).sin() + p_noise.sample(rng)).max(1.0)
        };
        out.push(PenRecord {
            x: x.round() as i64,
            y: y.round() as i64,
            timestamp: t0 + TICKS_PER_SAMPLE * i as i64,
            pressure: pressure.round() as i64,
            tilt_x: (tilt_x0 + 10.0 * (2.0 * PI * 0.2 * t).sin()).round() as i64,
            tilt_y: (tilt_y0 + 10.0 * (2.0 * PI * 0.15 * t).cos()).round() as i64,
            button: i64::from(!in_air),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forced_shape() {
        let seqs = generate_synthetic(&SyntheticParams::new(10, (100, 100), 0.0, 7)).unwrap();
        assert_eq!(seqs.len(), 20);
        assert!(seqs.iter().all(|s| s.len() == 100));
        assert_eq!(seqs.iter().filter(|s| s.label == Label::Pd).count(), 10);
        assert_eq!(seqs.iter().filter(|s| s.label == Label::Hc).count(), 10);
    }

    #[test]
    fn deterministic_for_seed() {
        let p = SyntheticParams::new(10, (100, 100), 0.0, 7);
        assert_eq!(generate_synthetic(&p).unwrap(), generate_synthetic(&p).unwrap());
        let q = SyntheticParams { seed: 8, ..p.clone() };
        assert_ne!(generate_synthetic(&p).unwrap(), generate_synthetic(&q).unwrap());
    }

    #[test]
    fn parameter_errors() {
        assert!(matches!(
            generate_synthetic(&SyntheticParams::new(1, (50, 20), 0.5, 0)),
            Err(SignalError::InvalidRange { min: 50, max: 20 })
        ));
        assert!(generate_synthetic(&SyntheticParams::new(1, (4, 20), 0.5, 0)).is_err());
        assert!(generate_synthetic(&SyntheticParams::new(1, (10, 20), 1.5, 0)).is_err());
    }

    #[test]
    fn lengths_within_range() {
        let seqs = generate_synthetic(&SyntheticParams::new(15, (200, 400), 1.0, 3)).unwrap();
        assert!(seqs.iter().all(|s| (200..=400).contains(&s.len())));
        // timestamps strictly increasing, in-air segment present
        for s in &seqs {
            let t = s.channel("timestamp").unwrap();
            assert!(t.windows(2).all(|w| w[1] > w[0]));
            assert!(s.channel("button").unwrap().contains(&0.0));
        }
    }
}
