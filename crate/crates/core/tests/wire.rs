use ipc_core::wire::{frame_decode, frame_encode, Frame, FrameDecoder, FrameType, WireError};
use proptest::prelude::*;

fn frame_type() -> impl Strategy<Value = FrameType> {
    prop_oneof![
        Just(FrameType::SeedCiphertext),
        Just(FrameType::BasisAnnounce),
        Just(FrameType::QkdControl),
        Just(FrameType::TranscriptLog),
    ]
}

fn frame() -> impl Strategy<Value = Frame> {
    (frame_type(), prop::collection::vec(any::<u8>(), 0..600)).prop_map(|(t, p)| Frame::new(t, p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn decode_inverts_encode(f in frame()) {
        let bytes = frame_encode(&f).unwrap();
        prop_assert_eq!(bytes.len(), f.encoded_len());
        let (g, used) = frame_decode(&bytes).unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(g, f);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn split_streams_decode_incrementally(
        frames in prop::collection::vec(frame(), 1..6),
        cut in 1usize..64,
    ) {
        let stream: Vec<u8> = frames.iter().flat_map(|f| frame_encode(f).unwrap()).collect();
        let mut dec = FrameDecoder::new();
        let mut out = Vec::new();
        for chunk in stream.chunks(cut) {
            dec.push(chunk);
            while let Some(f) = dec.next_frame().unwrap() {
                out.push(f);
            }
        }
        prop_assert_eq!(out, frames);
        prop_assert_eq!(dec.buffered(), 0);
    }

    #[test]
    fn any_strict_prefix_is_truncated(f in frame(), frac in 0.0f64..1.0) {
        let bytes = frame_encode(&f).unwrap();
        let cut = ((bytes.len() as f64) * frac) as usize;
        prop_assume!(cut < bytes.len());
        let truncated = matches!(frame_decode(&bytes[..cut]), Err(WireError::Truncated { .. }));
        prop_assert!(truncated, "prefix of {} bytes not reported as truncated", cut);
    }
}
