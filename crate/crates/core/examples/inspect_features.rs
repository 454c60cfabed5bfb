//! Prints the header and value statistics of a CDFM feature file.
//!
//! ```text
//! cargo run --example inspect_features -- FEATURES.cdfm
//! ```

use countingdino::tensorio::{load_feature_map, read_header};

fn main() -> countingdino::Result<()> {
    let Some(path) = std::env::args().nth(1) else {
        eprintln!("usage: inspect_features FEATURES.cdfm");
        std::process::exit(2);
    };
    let header = read_header(&path)?;
    println!("{}", serde_json::to_string_pretty(&header)?);

    let map = load_feature_map(&path)?;
    let data = map.data();
    let (min, max) = data
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mean = data.iter().map(|&v| v as f64).sum::<f64>() / data.len() as f64;
    println!("min {min}  max {max}  mean {mean:.6}");
    Ok(())
}
