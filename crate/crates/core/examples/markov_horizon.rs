//! Correct/wrong grounding as a two-state chain, and the long-horizon average error bound it implies.

use edgeform::theory::fixtures::HorizonFixture;
use edgeform::theory::MarkovChain;

fn main() {
    let chain = MarkovChain::new(0.2, 0.6).unwrap();
    println!("stationary P(wrong) = {:.4}", chain.stationary_wrong().unwrap());
    for k in [1, 2, 5, 20] {
        println!(
            "  k={k:>2}: closed form {:.6}, Monte Carlo {:.4}, running mean {:.6}",
            chain.wrong_prob(0.5, k).unwrap(),
            chain.monte_carlo_wrong(0.5, k as usize, 100_000, 3),
            chain.mean_wrong_prob(0.5, k).unwrap()
        );
    }

    let r = HorizonFixture::default().certify().unwrap();
    println!("lambda floor {:.4}, alpha {:.4}, w_bar {:.4}", r.lambda_floor, r.alpha, r.w_bar);
    let b = &r.runs[0].bound;
    println!("finite bound (run 0) {:.4}, asymptotic {:.4}", b.finite, b.asymptotic);
    println!(
        "{} runs: mean measured {:.4}, worst margin {:.4}, K->inf gap {:.1e} -> {}",
        r.runs.len(),
        r.mean_measured,
        r.worst_margin,
        r.limit_gap,
        if r.pass { "bound holds" } else { "BOUND VIOLATED" }
    );
}
