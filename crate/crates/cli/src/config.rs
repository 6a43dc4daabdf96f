use clap::Args;
use remask_core::StrategyConfig;

/// Decoding parameters; each flag overrides the scenario's or task set's value.
#[derive(Args, Debug, Default, Clone)]
pub struct ConfigArgs {
    /// Mask-to-token fill threshold.
    #[arg(long)]
    pub tau_m2t: Option<f64>,
    /// Token-to-token replacement threshold.
    #[arg(long)]
    pub tau_t2t: Option<f64>,
    /// LowProb remask threshold.
    #[arg(long)]
    pub tau_lp: Option<f64>,
    /// T2T-trigger remask threshold.
    #[arg(long)]
    pub tau_tr: Option<f64>,
    /// LogitDiff drop threshold.
    #[arg(long)]
    pub tau_ld: Option<f64>,
    /// Random remask probability.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Remask budget per position per block.
    #[arg(long)]
    pub c_max: Option<u32>,
    /// Fraction of editable positions remaskable per step.
    #[arg(long)]
    pub rho_max: Option<f64>,
    #[arg(long)]
    pub n_transfer: Option<usize>,
    #[arg(long)]
    pub block_len: Option<usize>,
    #[arg(long)]
    pub max_new_tokens: Option<usize>,
    #[arg(long)]
    pub max_inner_iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    pub fn apply(&self, mut c: StrategyConfig) -> StrategyConfig {
        fn set<T: Copy>(dst: &mut T, v: Option<T>) {
            if let Some(v) = v {
                *dst = v;
            }
        }
        set(&mut c.tau_m2t, self.tau_m2t);
        set(&mut c.tau_t2t, self.tau_t2t);
        set(&mut c.tau_lp, self.tau_lp);
        set(&mut c.tau_tr, self.tau_tr);
        set(&mut c.tau_ld, self.tau_ld);
        set(&mut c.sigma, self.sigma);
        set(&mut c.c_max, self.c_max);
        set(&mut c.rho_max, self.rho_max);
        set(&mut c.n_transfer, self.n_transfer);
        set(&mut c.block_len, self.block_len);
        set(&mut c.max_new_tokens, self.max_new_tokens);
        set(&mut c.seed, self.seed);
        if self.max_inner_iters.is_some() {
            c.max_inner_iters = self.max_inner_iters;
        }
        c
    }
}
