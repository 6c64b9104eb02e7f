//! Parses a small alignment file, prints frame intervals, and writes it back.

use tonelab::alignment::{format_alignment, parse_alignment_str, parse_vocab};

const VOCAB: &str = "sil\nb\nao\nh\nen\nhao\n";
const ALIGN: &str = "\
utt01\t0.10\t0.05\tb\tT0
utt01\t0.15\t0.22\tao\tT3
utt01\t0.37\t0.04\th\tT0
utt01\t0.41\t0.25\tao\tT3
";

fn main() -> tonelab::Result<()> {
    let vocab = parse_vocab(VOCAB)?;
    let utts = parse_alignment_str(ALIGN, &vocab)?;
    for u in &utts {
        println!("{}: tones {:?}", u.utt_id, u.tones());
        for (s, iv) in u.syllables.iter().zip(u.frame_intervals(0.01, 80)?) {
            println!("  {:>3} {:.2}-{:.2}s -> frames [{}, {})", vocab.syllable(s.syllable_id).unwrap(), s.start_s, s.end_s(), iv.start, iv.end);
        }
    }
    print!("{}", format_alignment(&utts, &vocab));
    Ok(())
}
