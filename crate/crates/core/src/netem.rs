//! Emulated network channels.
//!
//! Delay of one message: `base + 8·size/bandwidth·1000 + jitter` in ms, with
//! lognormal jitter. The preset numbers are emulation parameters picked to
//! reproduce a qualitative ordering between access networks; they are not
//! measurements.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const PRESETS: [&str; 7] = ["ethernet", "5g", "wifi6", "wifi5", "wifi4", "4g", "aws_wifi"];

/// RTT experiments use this many round trips per preset.
pub const RTT_EXPERIMENT_LEN: usize = 100;

/// A named channel. In config files `name` selects a preset and any other
/// field overrides it; unknown names start from the ethernet preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelSpec")]
pub struct ChannelModel {
    pub name: String,
    /// One-way propagation delay, ms.
    pub base_one_way_ms: f64,
    /// Bits per second.
    pub bandwidth_bps: f64,
    /// Median of the lognormal jitter term, ms. Zero disables jitter.
    pub jitter_ms: f64,
    /// Lognormal shape parameter.
    pub jitter_sigma: f64,
    pub loss_rate: f64,
    pub seed: u64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel::preset("ethernet").unwrap()
    }
}

impl ChannelModel {
    pub fn preset(name: &str) -> Result<Self> {
        let (base, mbps, jitter, sigma) = match name {
            "ethernet" => (1.0, 1000.0, 0.05, 0.5),
            "5g" => (6.0, 250.0, 2.0, 0.5),
            "wifi6" => (4.0, 400.0, 1.5, 0.6),
            "wifi5" => (4.0, 200.0, 2.0, 0.6),
            "wifi4" => (5.0, 45.0, 3.0, 0.7),
            "4g" => (35.0, 20.0, 8.0, 0.8),
            "aws_wifi" => (25.0, 45.0, 4.0, 0.7),
            other => return Err(Error::invalid(format!("unknown channel preset '{other}'"))),
        };
        Ok(ChannelModel {
            name: name.to_string(),
            base_one_way_ms: base,
            bandwidth_bps: mbps * 1e6,
            jitter_ms: jitter,
            jitter_sigma: sigma,
            loss_rate: 0.0,
            seed: 0,
        })
    }

    /// A channel that delivers instantly.
    pub fn ideal() -> Self {
        ChannelModel {
            name: "ideal".into(),
            base_one_way_ms: 0.0,
            bandwidth_bps: f64::INFINITY,
            jitter_ms: 0.0,
            jitter_sigma: 0.0,
            loss_rate: 0.0,
            seed: 0,
        }
    }

    pub fn without_jitter(mut self) -> Self {
        self.jitter_ms = 0.0;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_one_way_ms >= 0.0 && self.base_one_way_ms.is_finite()) {
            return Err(Error::Config(format!("base_one_way_ms must be >= 0, got {}", self.base_one_way_ms)));
        }
        if !(self.bandwidth_bps > 0.0) {
            return Err(Error::Config(format!("bandwidth_bps must be > 0, got {}", self.bandwidth_bps)));
        }
        if !(self.jitter_ms >= 0.0 && self.jitter_ms.is_finite() && self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(Error::Config("jitter parameters must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.loss_rate) {
            return Err(Error::Config(format!("loss_rate must be in [0, 1), got {}", self.loss_rate)));
        }
        Ok(())
    }

    /// Independent RNG for one stream direction (0 = uplink, 1 = downlink, ...).
    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// Deterministic part of the delay, ms.
    pub fn fixed_delay_ms(&self, size_bytes: usize) -> f64 {
        self.base_one_way_ms + 8.0 * size_bytes as f64 / self.bandwidth_bps * 1000.0
    }

    pub fn jitter_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.jitter_ms == 0.0 {
            return 0.0;
        }
        let d = LogNormal::new(self.jitter_ms.ln(), self.jitter_sigma).expect("validated jitter");
        d.sample(rng)
    }

    /// True if this message is dropped.
    pub fn lost<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        self.loss_rate > 0.0 && rng.gen::<f64>() < self.loss_rate
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelSpec {
    name: Option<String>,
    base_one_way_ms: Option<f64>,
    bandwidth_bps: Option<f64>,
    jitter_ms: Option<f64>,
    jitter_sigma: Option<f64>,
    loss_rate: Option<f64>,
    seed: Option<u64>,
}

impl TryFrom<ChannelSpec> for ChannelModel {
    type Error = Error;

    fn try_from(s: ChannelSpec) -> Result<Self> {
        let mut ch = match s.name.as_deref() {
            Some(n) if PRESETS.contains(&n) => ChannelModel::preset(n)?,
            Some("ideal") => ChannelModel::ideal(),
            Some(n) => ChannelModel { name: n.to_string(), ..ChannelModel::default() },
            None => ChannelModel::default(),
        };
        ch.base_one_way_ms = s.base_one_way_ms.unwrap_or(ch.base_one_way_ms);
        ch.bandwidth_bps = s.bandwidth_bps.unwrap_or(ch.bandwidth_bps);
        ch.jitter_ms = s.jitter_ms.unwrap_or(ch.jitter_ms);
        ch.jitter_sigma = s.jitter_sigma.unwrap_or(ch.jitter_sigma);
        ch.loss_rate = s.loss_rate.unwrap_or(ch.loss_rate);
        ch.seed = s.seed.unwrap_or(ch.seed);
        ch.validate()?;
        Ok(ch)
    }
}

pub fn preset(name: &str) -> Result<ChannelModel> {
    ChannelModel::preset(name)
}

/// One-way delivery delay in ms.
pub fn one_way_delay<R: Rng + ?Sized>(ch: &ChannelModel, size_bytes: usize, rng: &mut R) -> f64 {
    ch.fixed_delay_ms(size_bytes) + ch.jitter_sample(rng)
}

/// Round trip of `size_bytes` each way, ms.
pub fn rtt<R: Rng + ?Sized>(ch: &ChannelModel, size_bytes: usize, rng: &mut R) -> f64 {
    one_way_delay(ch, size_bytes, rng) + one_way_delay(ch, size_bytes, rng)
}

/// `n` round trips; forward and reverse legs draw from separate streams.
pub fn rtt_experiment(ch: &ChannelModel, size_bytes: usize, n: usize) -> Vec<f64> {
    let mut up = ch.rng(0);
    let mut down = ch.rng(1);
    (0..n)
        .map(|_| one_way_delay(ch, size_bytes, &mut up) + one_way_delay(ch, size_bytes, &mut down))
        .collect()
}

/// One direction of a channel: an in-order delay line with its own RNG
/// streams for delay and loss.
#[derive(Debug, Clone)]
pub struct Link {
    channel: ChannelModel,
    delay_rng: ChaCha8Rng,
    loss_rng: ChaCha8Rng,
    last_delivery: u64,
    tick_us: u64,
}

impl Link {
    /// `direction` selects independent streams (0 uplink, 1 downlink).
    /// Delays are rounded up to a multiple of `tick_us` microseconds.
    pub fn new(channel: &ChannelModel, direction: u64, tick_us: u64) -> Self {
        Link {
            delay_rng: channel.rng(2 * direction),
            loss_rng: channel.rng(2 * direction + 1),
            channel: channel.clone(),
            last_delivery: 0,
            tick_us: tick_us.max(1),
        }
    }

    pub fn channel(&self) -> &ChannelModel {
        &self.channel
    }

    /// Delivery time in µs of a message handed over at `now_us`, or `None`
    /// if it is lost (only when `lossy`). Messages never overtake each other.
    pub fn schedule(&mut self, now_us: u64, size_bytes: usize, lossy: bool) -> Option<u64> {
        if lossy && self.channel.lost(&mut self.loss_rng) {
            return None;
        }
        let delay_us = one_way_delay(&self.channel, size_bytes, &mut self.delay_rng) * 1e3;
        let ticks = (delay_us / self.tick_us as f64 - 1e-9).ceil().max(0.0) as u64;
        let t = (now_us + ticks * self.tick_us).max(self.last_delivery);
        self.last_delivery = t;
        Some(t)
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Median RTT in ms over the standard experiment.
pub fn median_rtt(ch: &ChannelModel, size_bytes: usize) -> f64 {
    median(&rtt_experiment(ch, size_bytes, RTT_EXPERIMENT_LEN))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{payload_size, ChunkFormat, PayloadMode};

    #[test]
    fn zero_jitter_formula() {
        let ch = ChannelModel::preset("ethernet").unwrap().without_jitter();
        let mut rng = ch.rng(0);
        assert_eq!(one_way_delay(&ch, 0, &mut rng), 1.0);
        let d = one_way_delay(&ch, 244_480, &mut rng);
        assert!((d - (1.0 + 8.0 * 244_480.0 / 1e9 * 1000.0)).abs() < 1e-12);
        assert!((d - 2.956).abs() < 0.01);
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(ChannelModel::preset("dialup"), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn delays_never_below_base_and_deterministic() {
        for name in PRESETS {
            let ch = ChannelModel::preset(name).unwrap().with_seed(11);
            let a = rtt_experiment(&ch, 10_000, 100);
            assert_eq!(a, rtt_experiment(&ch, 10_000, 100));
            assert_eq!(a.len(), 100);
            let mut rng = ch.rng(3);
            for _ in 0..200 {
                assert!(one_way_delay(&ch, 0, &mut rng) >= ch.base_one_way_ms);
            }
        }
    }

    #[test]
    fn preset_ordering() {
        let raw = payload_size(&ChunkFormat::default(), PayloadMode::Raw).unwrap();
        let m = |n: &str| median_rtt(&ChannelModel::preset(n).unwrap(), raw);
        assert!(m("ethernet") < m("5g"));
        assert!(m("5g") <= 40.0);
        assert!(m("wifi6") <= 40.0);
        for slow in ["wifi4", "4g", "aws_wifi"] {
            assert!(m(slow) > 40.0, "{slow}: {}", m(slow));
        }
        let q80 = payload_size(&ChunkFormat::default(), PayloadMode::Compressed(80)).unwrap();
        assert!(median_rtt(&ChannelModel::preset("wifi4").unwrap(), q80) <= 40.0);
    }

    #[test]
    fn link_is_fifo_and_ticked() {
        let ch = ChannelModel::preset("4g").unwrap().with_seed(5);
        let mut link = Link::new(&ch, 0, 1000);
        let mut prev = 0;
        for i in 0..200u64 {
            let size = if i % 2 == 0 { 100_000 } else { 10 };
            let t = link.schedule(i * 1000, size, true).unwrap();
            assert!(t >= prev);
            assert_eq!(t % 1000, 0);
            assert!(t >= i * 1000 + 35_000);
            prev = t;
        }
        let lossy = ChannelModel { loss_rate: 0.5, ..ch };
        let mut link = Link::new(&lossy, 0, 1);
        let lost = (0..1000).filter(|_| link.schedule(0, 10, true).is_none()).count();
        assert!((400..600).contains(&lost), "{lost}");
        assert!((0..100).all(|_| link.schedule(0, 10, false).is_some()));
    }

    #[test]
    fn validation() {
        let mut ch = ChannelModel::preset("4g").unwrap();
        ch.validate().unwrap();
        ch.loss_rate = 1.0;
        assert!(ch.validate().is_err());
        ch.loss_rate = 0.0;
        ch.bandwidth_bps = 0.0;
        assert!(ch.validate().is_err());
        let parsed: ChannelModel = crate::config::parse("name = \"x\"\nbase_one_way_ms = 3.0\n").unwrap();
        assert_eq!(parsed.base_one_way_ms, 3.0);
        assert_eq!(parsed.bandwidth_bps, 1e9);
        let wifi: ChannelModel = crate::config::parse("name = \"wifi4\"\nseed = 4\n").unwrap();
        assert_eq!(wifi, ChannelModel::preset("wifi4").unwrap().with_seed(4));
        let back: ChannelModel = crate::config::parse(&crate::config::to_string(&wifi).unwrap()).unwrap();
        assert_eq!(back, wifi);
        assert!(crate::config::parse::<ChannelModel>("name = \"4g\"\nloss_rate = 2.0\n").is_err());
    }
}
