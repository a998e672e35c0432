//! Solve the reference market and print the headline equilibrium.

use greeneq::{solve_equilibrium, Market, MarketParams};

fn main() -> Result<(), greeneq::Error> {
    let market = Market::new(MarketParams::default())?;
    let eq = solve_equilibrium(&market)?;
    println!(
        "c_p* = {:.4}, b* = {:.3}, T* = {:.5}, Y = {:.1}, N* = {:.4}, regime {}",
        eq.c_p_star,
        eq.b_star,
        eq.turnover,
        eq.output(),
        eq.entry_rate,
        eq.regime()
    );
    Ok(())
}
