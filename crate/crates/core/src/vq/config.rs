use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Raw samples are cut into Hann-windowed frames of `span` samples every `hop`
/// samples, each frame becomes a log power spectrum of `fft / 2 + 1` bins, and
/// the conv stack runs over that frame sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub span: usize,
    pub hop: usize,
    pub fft: usize,
    pub layers: Vec<ConvLayer>,
}

impl Default for EncoderConfig {
    /// Receptive field 30 samples, total stride 10.
    fn default() -> Self {
        let l = |channels| ConvLayer {
            channels,
            kernel: 1,
            stride: 1,
        };
        Self {
            span: 30,
            hop: 10,
            fft: 64,
            layers: vec![l(32), l(32), l(32), l(16)],
        }
    }
}

impl EncoderConfig {
    pub fn input_dim(&self) -> usize {
        self.fft / 2 + 1
    }

    /// Samples between consecutive output frames.
    pub fn total_stride(&self) -> usize {
        self.hop * self.layers.iter().map(|l| l.stride).product::<usize>()
    }

    /// Samples seen by one output frame.
    pub fn receptive_field(&self) -> usize {
        let mut rf = 1;
        let mut jump = 1;
        for l in &self.layers {
            rf += (l.kernel - 1) * jump;
            jump *= l.stride;
        }
        self.span + (rf - 1) * self.hop
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim(), |l| l.channels)
    }

    /// Frames produced from `len` samples (0 if shorter than the receptive field).
    pub fn frames(&self, len: usize) -> usize {
        let mut t = crate::dsp::frame_count(len, self.span, self.hop);
        for l in &self.layers {
            if t < l.kernel {
                return 0;
            }
            t = (t - l.kernel) / l.stride + 1;
        }
        t
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizerConfig {
    pub groups: usize,
    pub codewords: usize,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        Self { groups: 2, codewords: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatorConfig {
    /// `(channels, kernel)` of each causal layer.
    pub layers: Vec<(usize, usize)>,
}

impl Default for AggregatorConfig {
    fn default() -> Self {
        Self {
            layers: vec![(16, 3), (16, 3)],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    /// Largest prediction offset K.
    pub steps: usize,
    pub negatives: usize,
    /// Weight on the negative term; each sampled negative contributes `lambda / negatives`.
    pub lambda: f64,
    pub tau_start: f64,
    pub tau_end: f64,
    /// Fraction of training over which τ is annealed linearly.
    pub anneal_fraction: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            steps: 3,
            negatives: 10,
            lambda: 10.0,
            tau_start: 2.0,
            tau_end: 0.5,
            anneal_fraction: 0.5,
        }
    }
}

impl ContrastiveConfig {
    pub fn tau_at(&self, step: usize, total: usize) -> f64 {
        let anneal = (total as f64 * self.anneal_fraction).max(1.0);
        let frac = (step as f64 / anneal).min(1.0);
        self.tau_start + (self.tau_end - self.tau_start) * frac
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VqConfig {
    pub encoder: EncoderConfig,
    pub quantizer: QuantizerConfig,
    pub aggregator: AggregatorConfig,
    pub contrastive: ContrastiveConfig,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    /// Training examples are random crops of at most this many samples.
    pub crop: usize,
}

impl Default for VqConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            quantizer: QuantizerConfig::default(),
            aggregator: AggregatorConfig::default(),
            contrastive: ContrastiveConfig::default(),
            steps: 3000,
            batch: 4,
            lr: 5e-3,
            crop: 600,
        }
    }
}

impl VqConfig {
    pub fn dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn context_dim(&self) -> usize {
        self.aggregator.layers.last().map_or(self.dim(), |l| l.0)
    }

    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: String| Err(crate::Error::Config(m));
        let e = &self.encoder;
        if e.span == 0 || e.hop == 0 || e.fft < e.span {
            return bad(format!("encoder framing needs span, hop >= 1 and fft >= span (got {}, {}, {})", e.span, e.hop, e.fft));
        }
        if e.layers.is_empty() || e.layers.iter().any(|l| l.kernel == 0 || l.stride == 0 || l.channels == 0) {
            return bad("encoder layers need positive channels, kernel and stride".into());
        }
        let q = &self.quantizer;
        if q.groups == 0 || q.codewords < 2 || !self.dim().is_multiple_of(q.groups) {
            return bad(format!("feature dim {} must split into {} groups, V >= 2", self.dim(), q.groups));
        }
        if self.contrastive.steps == 0 || self.contrastive.negatives == 0 {
            return bad("contrastive K and negative count must be >= 1".into());
        }
        if self.contrastive.tau_start <= 0.0 || self.contrastive.tau_end <= 0.0 {
            return bad("temperature must stay positive".into());
        }
        if self.crop < self.encoder.receptive_field() {
            return bad("crop shorter than the encoder receptive field".into());
        }
        Ok(())
    }
}
