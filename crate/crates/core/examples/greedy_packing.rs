//! Zero-aware greedy arrangement of zero-padded depthwise filters.

use falconpack::packing::{depthwise_patterns, greedy_scs_arrange};

fn main() -> falconpack::Result<()> {
    for c in [2, 4, 6, 8] {
        let arr = greedy_scs_arrange(&depthwise_patterns(c))?;
        println!(
            "C = {c}: {} slots instead of {} ({:.0}% dense)",
            arr.total_slots,
            c * c,
            100.0 * c as f64 / arr.total_slots as f64
        );
        if c <= 6 {
            let slots: String = arr
                .render()
                .iter()
                .map(|s| s.map_or('.', |f| char::from_digit(f as u32, 10).unwrap_or('?')))
                .collect();
            println!("  {slots}");
        }
    }
    Ok(())
}
