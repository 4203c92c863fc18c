#![no_main]
use libfuzzer_sys::fuzz_target;
use touch3d::wire::{decode_stream, decode_trace, encode_trace, DecoderState};

fuzz_target!(|data: &[u8]| {
    let (frames, diag) = decode_trace(data);
    assert_eq!(diag.frames, frames.len() as u64);

    // feeding the same bytes in two chunks must not change the result
    if let Some((&cut, rest)) = data.split_first() {
        let at = usize::from(cut) % (rest.len() + 1);
        let mut state = DecoderState::new();
        let mut split = decode_stream(&rest[..at], &mut state).0;
        split.extend(decode_stream(&rest[at..], &mut state).0);
        assert_eq!(split, decode_trace(rest).0);
    }

    // every accepted frame re-encodes to bytes that decode to itself
    let bytes = encode_trace(&frames).expect("decoded frames are valid");
    assert_eq!(decode_trace(&bytes).0, frames);
});
