//! Regenerates the β→SNR lookup table used by the WADA estimator.
//!
//! cargo run --release -p spoofgap --example wada_table -- 10000000 20200901 > crates/core/data/wada_gamma04_v1.tsv

use spoofgap::quality::wada::WadaTable;

fn main() {
    let mut args = std::env::args().skip(1);
    let samples: usize = args.next().map_or(10_000_000, |v| v.parse().expect("sample count"));
    let seed: u64 = args.next().map_or(20_200_901, |v| v.parse().expect("seed"));
    let table = WadaTable::generate(samples, seed);
    if let Err(e) = table.check_monotone() {
        eprintln!("warning: {e}");
    }
    print!("{}", table.to_tsv());
}
