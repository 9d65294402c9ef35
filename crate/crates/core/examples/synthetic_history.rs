//! Writes a synthetic queue history to standard output: random queue states
//! whose "observed" wait is the epoch-by-epoch drain time, one row per day.
//!
//!     cargo run -p stakesim-core --example synthetic_history -- [rows] [seed]

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stakesim_core::chain::ChurnParams;
use stakesim_core::queue::{simulate_queue_days, ChurnTable, Direction, DEFAULT_MAX_TIERS, HISTORY_HEADER};

fn main() {
    let mut args = std::env::args().skip(1);
    let rows: u64 = args.next().map_or(60, |a| a.parse().expect("rows must be an integer"));
    let seed: u64 = args.next().map_or(2023, |a| a.parse().expect("seed must be an integer"));

    let table = ChurnTable::build(ChurnParams::default(), DEFAULT_MAX_TIERS).expect("default table");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2023, 5, 21).expect("valid date");

    println!("{}", HISTORY_HEADER.join(","));
    for day in 0..rows {
        let kind = if rng.gen_bool(0.5) { Direction::Entry } else { Direction::Exit };
        let active = rng.gen_range(540_000..720_000);
        let queue = rng.gen_range(0..100_000);
        let observed = simulate_queue_days(active, queue, &table, kind).expect("active within table");
        let date = start.checked_add_days(Days::new(day)).expect("date in range");
        println!("{},{kind},{active},{queue},{observed:.4}", date.format("%Y-%m-%d"));
    }
}
