//! Map an n-gram back to the assembly listing it came from.
//!
//! cargo run --release --example codemap

use gramsight::codemap::{listing_byte_stream, locate_ngram, map_address_to_snippet};
use gramsight::corpus::parse_asm_listing;
use gramsight::ngram_index::NGram;

const LISTING: &str = include_str!("../fixtures/call_site.asm");

fn main() -> gramsight::Result<()> {
    let listing = parse_asm_listing(LISTING);
    let stream = listing_byte_stream(&listing, "call_site")?;
    let gram: NGram = "D0506A00E8B8".parse()?;
    for address in locate_ngram(&stream, &gram) {
        let snippet = map_address_to_snippet(&listing, address, gram.len())?;
        // the n-gram starts one byte into the `adc edx, eax` instruction
        println!("{}", snippet.render());
        assert_eq!(snippet.highlighted_bytes(), gram.as_bytes());
    }
    Ok(())
}
