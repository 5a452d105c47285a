use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::rng::{stream, Purpose};
use super::SimError;
use crate::config::{ChannelSection, ScenarioConfig};

/// Node placement and static directed link gains.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub positions: Vec<(f64, f64)>,
    /// `gain[i][j]`: received power in dBm at j for a frame sent by i,
    /// before fading. The diagonal is unused.
    pub gain: Vec<Vec<f64>>,
    pub noise_floor_db: f64,
    pub area: (f64, f64),
}

impl Topology {
    /// Topology with explicit gains; positions default to the origin.
    pub fn from_gains(gain: Vec<Vec<f64>>, noise_floor_db: f64) -> Result<Self, SimError> {
        let n = gain.len();
        if n == 0 || gain.iter().any(|row| row.len() != n) {
            return Err(SimError::Topology(format!(
                "gain matrix must be square and non-empty, got {n} rows"
            )));
        }
        Ok(Topology {
            positions: vec![(0.0, 0.0); n],
            gain,
            noise_floor_db,
            area: (1.0, 1.0),
        })
    }

    pub fn len(&self) -> usize {
        self.gain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gain.is_empty()
    }

    pub fn snr_db(&self, from: usize, to: usize) -> f64 {
        self.gain[from][to] - self.noise_floor_db
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let (pa, pb) = (self.positions[a], self.positions[b]);
        ((pa.0 - pb.0).powi(2) + (pa.1 - pb.1).powi(2)).sqrt()
    }

    /// Builds the topology a configuration describes.
    pub fn from_config(config: &ScenarioConfig) -> Result<Self, SimError> {
        let s = &config.scenario;
        let mut topo = if config.topology.positions.is_empty() {
            generate_uniform_topology(
                usize::from(s.nodes),
                (s.area_w, s.area_h),
                s.seed,
                &config.channel,
            )?
        } else {
            let positions = config
                .topology
                .positions
                .iter()
                .map(|p| (p[0], p[1]))
                .collect();
            with_channel_gains(positions, (s.area_w, s.area_h), s.seed, &config.channel)
        };
        if !config.topology.gain_db.is_empty() {
            topo.gain = config.topology.gain_db.clone();
        }
        Ok(topo)
    }
}

/// Places `n` nodes one per grid cell in row-major order over a
/// ⌈√n⌉ × ⌈√n⌉ grid, uniformly inside each cell. Node 0 lands in the first
/// cell and acts as the sink.
pub fn generate_uniform_topology(
    n: usize,
    area: (f64, f64),
    seed: u64,
    channel: &ChannelSection,
) -> Result<Topology, SimError> {
    if n == 0 {
        return Err(SimError::Topology(
            "a topology needs at least one node".into(),
        ));
    }
    let side = (n as f64).sqrt().ceil() as usize;
    let side = if side * side < n { side + 1 } else { side };
    let (cw, ch) = (area.0 / side as f64, area.1 / side as f64);
    let positions = (0..n)
        .map(|i| {
            let mut rng = stream(seed, i as u16, Purpose::Placement);
            let (row, col) = (i / side, i % side);
            let x = (col as f64 + rng.random::<f64>()) * cw;
            let y = (row as f64 + rng.random::<f64>()) * ch;
            (x, y)
        })
        .collect();
    Ok(with_channel_gains(positions, area, seed, channel))
}

fn with_channel_gains(
    positions: Vec<(f64, f64)>,
    area: (f64, f64),
    seed: u64,
    c: &ChannelSection,
) -> Topology {
    let n = positions.len();
    let shadow = Normal::new(0.0, c.shadowing_sigma_db).expect("sigma validated");
    let mut gain = vec![vec![f64::NEG_INFINITY; n]; n];
    for (i, row) in gain.iter_mut().enumerate() {
        let mut rng = stream(seed, i as u16, Purpose::Shadowing);
        for (j, g) in row.iter_mut().enumerate() {
            // Drawn for every pair, diagonal included, so node i's stream
            // consumption does not depend on placement.
            let offset = shadow.sample(&mut rng);
            if i == j {
                continue;
            }
            let (a, b) = (positions[i], positions[j]);
            let d = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
            *g = c.tx_power_dbm - path_loss_db(d, c) + offset;
        }
    }
    Topology {
        positions,
        gain,
        noise_floor_db: c.noise_floor_dbm,
        area,
    }
}

/// Log-distance path loss. Distances below the reference clamp to it.
pub fn path_loss_db(d: f64, c: &ChannelSection) -> f64 {
    c.pl0_db + 10.0 * c.path_loss_exponent * (d.max(c.d0_m) / c.d0_m).log10()
}

/// Logistic reception probability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrrCurve {
    pub slope: f64,
    pub snr_mid_db: f64,
}

impl Default for PrrCurve {
    fn default() -> Self {
        PrrCurve {
            slope: 0.8,
            snr_mid_db: 6.0,
        }
    }
}

impl PrrCurve {
    pub fn prr(&self, snr_db: f64) -> f64 {
        (1.0 / (1.0 + (-self.slope * (snr_db - self.snr_mid_db)).exp())).clamp(0.0, 1.0)
    }

    /// SNR at which the curve reaches `p`.
    pub fn snr_for(&self, p: f64) -> f64 {
        self.snr_mid_db - ((1.0 - p) / p).ln() / self.slope
    }
}

/// Reception probability averaged over Gaussian fading of `sigma_db`,
/// integrated with Simpson's rule over ±6σ.
pub fn mean_prr(curve: &PrrCurve, snr_db: f64, sigma_db: f64) -> f64 {
    if sigma_db == 0.0 {
        return curve.prr(snr_db);
    }
    const STEPS: usize = 240;
    let h = 12.0 / STEPS as f64;
    let mut acc = 0.0;
    for k in 0..=STEPS {
        let z = -6.0 + k as f64 * h;
        let w = if k == 0 || k == STEPS {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        acc += w * pdf * curve.prr(snr_db + sigma_db * z);
    }
    (acc * h / 3.0).clamp(0.0, 1.0)
}

/// Reception probability with the default curve.
pub fn link_prr(gain_db: f64, noise_floor_db: f64) -> f64 {
    PrrCurve::default().prr(gain_db - noise_floor_db)
}
