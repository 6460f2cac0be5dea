//! Fixtures shared by the benchmarks.

use predopt_core::datagen::{
    gen_knapsack_data, gen_knapsack_instance, gen_multiclass_data, gen_portfolio_synthetic,
    gen_truth_matrix, KnapsackGenParams, LogitGenParams,
};
use predopt_core::rng::derive_seed;
use predopt_core::{Dataset, KnapsackDomain, PortfolioDomain};

pub struct KnapsackFixture {
    pub domain: KnapsackDomain,
    pub data: Dataset,
}

pub fn knapsack(m: usize, k: usize, n: usize, seed: u64) -> KnapsackFixture {
    let domain = gen_knapsack_instance(m, derive_seed(seed, 0)).expect("knapsack instance");
    let params = KnapsackGenParams {
        m,
        k,
        degree: 5,
        noise_halfwidth: 0.1,
        additive_noise: true,
        seed: derive_seed(seed, 3),
    };
    let v0 = gen_truth_matrix(m, k, derive_seed(seed, 1));
    let data = gen_knapsack_data(&params, &v0, n).expect("knapsack data");
    KnapsackFixture { domain, data }
}

pub struct PortfolioFixture {
    pub domain: PortfolioDomain,
    pub returns: Vec<Vec<f64>>,
}

pub fn portfolio(m: usize, seed: u64) -> PortfolioFixture {
    let window = gen_portfolio_synthetic(m, 4, 4 * m, 16, seed).expect("portfolio window");
    PortfolioFixture {
        domain: PortfolioDomain::long_only(window.q).expect("risk matrix"),
        returns: window.test.costs,
    }
}

pub fn multiclass(m: usize, k: usize, n: usize, seed: u64) -> Dataset {
    let params = LogitGenParams::random(m, k, derive_seed(seed, 1), derive_seed(seed, 3));
    gen_multiclass_data(&params, n).expect("multiclass data").data
}
