//! Per-tone F1, pattern accuracy and the markdown table on hand-made
//! predictions.

use tonelab::eval::{f1_from_confusion, pattern_accuracy, render_markdown, report_from_predictions, default_patterns, Confusion};
use tonelab::tone::parse_pattern;
use tonelab::Tone;

fn main() -> tonelab::Result<()> {
    let c = Confusion::from_pairs(2, &[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 1, 0])?;
    for (k, m) in f1_from_confusion(&c).iter().enumerate() {
        println!("class {k}: precision {:.4} recall {:.4} f1 {:.4}", m.precision, m.recall, m.f1);
    }

    let refs = parse_pattern("T0-T4-T4-T0-T2-T2-T3")?;
    let preds = parse_pattern("T0-T4-T1-T0-T2-T2-T3")?;
    for p in ["T4-T4", "T2-T2", "T4-T3-T4"] {
        let score = pattern_accuracy(&[refs.clone()], &[preds.clone()], &parse_pattern(p)?)?;
        println!("{p}: {score:?}");
    }

    let keys: Vec<(&str, usize)> = (0..refs.len()).map(|i| ("u1", i)).collect();
    let perfect = report_from_predictions("+SF+C1".into(), &keys, &refs, &refs, &default_patterns())?;
    let noisy = report_from_predictions("ResNetSP".into(), &keys, &refs, &preds, &default_patterns())?;
    println!("\n{}", render_markdown(&[noisy, perfect]));
    println!("T4 appears {} times", refs.iter().filter(|t| **t == Tone::T4).count());
    Ok(())
}
