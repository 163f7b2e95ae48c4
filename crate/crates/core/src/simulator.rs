//! Ground-truth generation: Markov-switching DWNA targets observed by a
//! noisy position sensor.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ModelConfig, ParamDocument, ParamVector, TransitionMatrix};

/// Stream reserved for drawing dataset parameters; trajectory `i` uses stream `i`.
const PARAM_STREAM: u64 = u64::MAX;

/// Independent, reproducible random stream for `(seed, stream)`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform sampling intervals for dataset (and initial) parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamRanges {
    pub sigma_v: [(f64, f64); 2],
    pub p_stay: (f64, f64),
    pub sigma_r: (f64, f64),
}

impl Default for ParamRanges {
    fn default() -> Self {
        Self {
            sigma_v: [(1e-3, 0.98), (9.81, 49.1)],
            p_stay: (0.95, 0.999),
            sigma_r: (1.0, 25.0),
        }
    }
}

impl ParamRanges {
    /// Map unit-interval draws onto the ranges. For `m` modes this takes
    /// `2m + 1` values (sigma_v per mode, p_stay per mode, sigma_r); a
    /// single-mode set takes two and uses the non-maneuvering range.
    pub fn from_unit(&self, m: usize, u: &[f64]) -> Result<ParamVector> {
        if !(1..=2).contains(&m) {
            return Err(Error::Config(format!("parameter ranges cover 1 or 2 modes, got {m}")));
        }
        let lerp = |(lo, hi): (f64, f64), t: f64| lo + (hi - lo) * t;
        if m == 1 {
            if u.len() != 2 {
                return Err(Error::Config("need 2 unit draws for one mode".into()));
            }
            return ParamVector::single_mode(lerp(self.sigma_v[0], u[0]), lerp(self.sigma_r, u[1]));
        }
        if u.len() != 5 {
            return Err(Error::Config("need 5 unit draws for two modes".into()));
        }
        ParamVector::new(
            vec![lerp(self.sigma_v[0], u[0]), lerp(self.sigma_v[1], u[1])],
            vec![lerp(self.p_stay, u[2]), lerp(self.p_stay, u[3])],
            lerp(self.sigma_r, u[4]),
        )
    }

    pub fn sample(&self, m: usize, rng: &mut impl Rng) -> Result<ParamVector> {
        let n = if m == 1 { 2 } else { 2 * m + 1 };
        let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        self.from_unit(m, &u)
    }
}

/// Draw dataset parameters from the default ranges.
pub fn sample_dataset_params(m: usize, rng: &mut impl Rng) -> Result<ParamVector> {
    ParamRanges::default().sample(m, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Ground-truth `(px, vx, py, vy)` per step.
    pub states: Vec<[f64; 4]>,
    /// Active mode per step.
    pub modes: Vec<usize>,
    /// Noisy `(px, py)` per step.
    pub measurements: Vec<[f64; 2]>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }
}

/// Lower Cholesky factor of one DWNA axis block; zero for zero noise.
fn axis_factor(sigma_v: f64, tau: f64) -> [f64; 3] {
    let var = sigma_v * sigma_v;
    let a = var * tau.powi(3) / 3.0;
    if a <= 0.0 {
        return [0.0; 3];
    }
    let b = var * tau * tau / 2.0;
    let c = var * tau;
    let l11 = a.sqrt();
    let l21 = b / l11;
    let l22 = (c - l21 * l21).max(0.0).sqrt();
    [l11, l21, l22]
}

/// Simulate one trajectory of length `len` starting at rest at the origin.
///
/// Parameters are used as given (zero noise levels are allowed here).
pub fn generate_trajectory(
    params: &ParamVector,
    cfg: &ModelConfig,
    len: usize,
    rng: &mut impl Rng,
) -> Result<Trajectory> {
    if len < 2 {
        return Err(Error::Config(format!("trajectory length must be at least 2, got {len}")));
    }
    if params.sigma_v.len() != cfg.m {
        return Err(Error::Config("parameter/mode count mismatch".into()));
    }
    let transition = TransitionMatrix::from_stay(&params.p_stay)?;
    let factors: Vec<[f64; 3]> = params.sigma_v.iter().map(|&s| axis_factor(s, cfg.tau)).collect();
    let tau = cfg.tau;

    let pick = |row: &[f64], u: f64| {
        let mut acc = 0.0;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        row.len() - 1
    };

    let stationary = transition.stationary();
    let mut mode = pick(&stationary, rng.random::<f64>());
    let mut x = [0.0f64; 4];
    let mut traj = Trajectory {
        states: Vec::with_capacity(len),
        modes: Vec::with_capacity(len),
        measurements: Vec::with_capacity(len),
    };

    for t in 0..len {
        let vx: f64 = rng.sample(StandardNormal);
        let vy: f64 = rng.sample(StandardNormal);
        traj.states.push(x);
        traj.modes.push(mode);
        traj.measurements.push([x[0] + params.sigma_r * vx, x[2] + params.sigma_r * vy]);
        if t + 1 == len {
            break;
        }

        let [l11, l21, l22] = factors[mode];
        let mut next = [x[0] + tau * x[1], x[1], x[2] + tau * x[3], x[3]];
        for base in [0, 2] {
            let e1: f64 = rng.sample(StandardNormal);
            let e2: f64 = rng.sample(StandardNormal);
            next[base] += l11 * e1;
            next[base + 1] += l21 * e1 + l22 * e2;
        }
        x = next;

        let row: Vec<f64> = (0..cfg.m).map(|j| transition.get(mode, j)).collect();
        mode = pick(&row, rng.random::<f64>());
    }
    Ok(traj)
}

/// Size of a generated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_trajectories: usize,
    pub length: usize,
    pub modes: usize,
    pub tau: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_trajectories: 60,
            length: 120,
            modes: 2,
            tau: 1.0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        ModelConfig::new(self.tau, self.modes)?;
        if self.n_trajectories == 0 || self.length == 0 {
            return Err(Error::Config("dataset needs at least one trajectory of at least one step".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub seed: u64,
    pub true_params: ParamDocument,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn generate(seed: u64, spec: &DatasetSpec) -> Result<Self> {
        let params = sample_dataset_params(spec.modes, &mut substream(seed, PARAM_STREAM))?;
        Self::generate_with(seed, &params, spec)
    }

    /// Generate with explicitly given parameters.
    pub fn generate_with(seed: u64, params: &ParamVector, spec: &DatasetSpec) -> Result<Self> {
        spec.validate()?;
        let cfg = ModelConfig::new(spec.tau, spec.modes)?;
        let trajectories = (0..spec.n_trajectories)
            .map(|i| generate_trajectory(params, &cfg, spec.length, &mut substream(seed, i as u64)))
            .collect::<Result<_>>()?;
        Ok(Self {
            seed,
            true_params: ParamDocument::new(params, &cfg),
            trajectories,
        })
    }

    pub fn config(&self) -> Result<ModelConfig> {
        ModelConfig::new(self.true_params.tau, self.true_params.m)
    }

    pub fn params(&self) -> Result<ParamVector> {
        Ok(self.true_params.split()?.0)
    }

    /// Even indices train, odd indices test.
    pub fn split(&self) -> Split {
        let (train, test) = (0..self.trajectories.len()).partition(|i| i % 2 == 0);
        Split { train, test }
    }

    pub fn train(&self) -> Vec<&Trajectory> {
        self.split().train.iter().map(|&i| &self.trajectories[i]).collect()
    }

    pub fn test(&self) -> Vec<&Trajectory> {
        self.split().test.iter().map(|&i| &self.trajectories[i]).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        fs::write(path, json).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let ds: Dataset = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        ds.true_params.split()?;
        for (i, t) in ds.trajectories.iter().enumerate() {
            if t.states.len() != t.len() || t.modes.len() != t.len() {
                return Err(Error::Data(format!("trajectory {i} has inconsistent lengths")));
            }
            if t.modes.iter().any(|&m| m >= ds.true_params.m) {
                return Err(Error::Data(format!("trajectory {i} has an out-of-range mode")));
            }
        }
        Ok(ds)
    }

    /// One `traj_NNN.csv` per trajectory with columns `t,zx,zy`.
    pub fn write_measurement_csvs(&self, dir: &Path) -> Result<()> {
        let io = |source| Error::Io {
            path: dir.to_path_buf(),
            source,
        };
        fs::create_dir_all(dir).map_err(io)?;
        for (i, traj) in self.trajectories.iter().enumerate() {
            let path = dir.join(format!("traj_{i:03}.csv"));
            let mut out = String::from("t,zx,zy\n");
            for (t, z) in traj.measurements.iter().enumerate() {
                out.push_str(&format!("{t},{},{}\n", z[0], z[1]));
            }
            let mut f = fs::File::create(&path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            f.write_all(out.as_bytes()).map_err(|source| Error::Io { path, source })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_endpoints() {
        let r = ParamRanges::default();
        let lo = r.from_unit(2, &[0.0; 5]).unwrap();
        assert_eq!(lo.sigma_v, vec![0.001, 9.81]);
        assert_eq!(lo.p_stay, vec![0.95, 0.95]);
        assert_eq!(lo.sigma_r, 1.0);
        let hi = r.from_unit(2, &[1.0; 5]).unwrap();
        assert_eq!(hi.sigma_v, vec![0.98, 49.1]);
        assert_eq!(hi.p_stay, vec![0.999, 0.999]);
        assert_eq!(hi.sigma_r, 25.0);
        assert!(r.from_unit(3, &[0.5; 7]).is_err());
    }

    #[test]
    fn sigma_r_sample_mean() {
        let mut rng = substream(3, 0);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|_| sample_dataset_params(2, &mut rng).unwrap().sigma_r)
            .sum::<f64>()
            / n as f64;
        assert!((12.6..=13.4).contains(&mean), "{mean}");
    }

    #[test]
    fn noiseless_target_stays_at_origin() {
        let p = ParamVector {
            sigma_v: vec![0.0, 0.0],
            p_stay: vec![0.9, 0.9],
            sigma_r: 0.0,
        };
        let cfg = ModelConfig::new(1.0, 2).unwrap();
        let t = generate_trajectory(&p, &cfg, 50, &mut substream(1, 0)).unwrap();
        assert!(t.states.iter().all(|s| *s == [0.0; 4]));
        assert!(t.measurements.iter().all(|z| *z == [0.0; 2]));
    }

    #[test]
    fn deterministic_generation_and_split() {
        let spec = DatasetSpec {
            n_trajectories: 6,
            length: 20,
            ..DatasetSpec::default()
        };
        let a = Dataset::generate(11, &spec).unwrap();
        let b = Dataset::generate(11, &spec).unwrap();
        assert_eq!(a, b);
        let split = a.split();
        assert_eq!(split.train, vec![0, 2, 4]);
        assert_eq!(split.test, vec![1, 3, 5]);
        assert_ne!(a, Dataset::generate(12, &spec).unwrap());
    }

    #[test]
    fn default_dimensions() {
        let ds = Dataset::generate(0, &DatasetSpec::default()).unwrap();
        assert_eq!(ds.trajectories.len(), 60);
        assert!(ds.trajectories.iter().all(|t| t.len() == 120 && t.states[0] == [0.0; 4]));
        assert_eq!(ds.train().len(), 30);
    }

    #[test]
    fn persist_round_trip() {
        let spec = DatasetSpec {
            n_trajectories: 3,
            length: 15,
            ..DatasetSpec::default()
        };
        let ds = Dataset::generate(5, &spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        ds.save(&path).unwrap();
        assert_eq!(Dataset::load(&path).unwrap(), ds);
        ds.write_measurement_csvs(&dir.path().join("csv")).unwrap();
        let csv = fs::read_to_string(dir.path().join("csv/traj_002.csv")).unwrap();
        assert!(csv.starts_with("t,zx,zy\n0,"));
        assert_eq!(csv.lines().count(), 16);
        assert!(matches!(Dataset::load(&dir.path().join("missing.json")), Err(Error::Io { .. })));
    }

    #[test]
    fn distinct_parameters_across_seeds() {
        let mut seen: Vec<Vec<f64>> = Vec::new();
        for seed in 0..100u64 {
            let p = sample_dataset_params(2, &mut substream(seed, PARAM_STREAM)).unwrap();
            let mut v = p.sigma_v.clone();
            v.extend(&p.p_stay);
            v.push(p.sigma_r);
            assert!(!seen.contains(&v));
            seen.push(v);
        }
    }
}
