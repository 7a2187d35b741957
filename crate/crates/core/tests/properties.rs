use avse_core::dsp::{concat_fuse, deinterleave, istft, FeatureMap, StftConfig, WindowPair};
use avse_core::metrics::quality;
use avse_core::netem::{one_way_delay, ChannelModel, PRESETS};
use avse_core::pipeline::{simulate, total_delay, EventKind, PipelineConfig};
use avse_core::scene::{mix, AcousticScene, ImpulseResponsePair, SceneSource, Signal};
use avse_core::video::{Roi, VideoFrame};
use avse_core::wire::{
    decode, encode, Control, ControlCode, Decoder, EnhancedAudio, FramePayload, MediaChunk,
    Message, WireMessage,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn signal(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

fn frame(max: usize) -> impl Strategy<Value = VideoFrame> {
    (1..=max, 1..=max).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<u8>(), w * h)
            .prop_map(move |px| VideoFrame::new(w, h, px).unwrap())
    })
}

fn frame_payload() -> impl Strategy<Value = FramePayload> {
    prop_oneof![
        Just(FramePayload::None),
        frame(12).prop_map(FramePayload::Raw),
        (frame(24), 1u8..=100).prop_map(|(f, q)| FramePayload::compress(&f, q).unwrap()),
    ]
}

fn message() -> impl Strategy<Value = WireMessage> {
    let media = (any::<u32>(), any::<u64>(), prop::collection::vec(any::<i16>(), 0..200), frame_payload())
        .prop_map(|(seq, capture_ts_us, audio, frame)| {
            Message::Media(MediaChunk { seq, capture_ts_us, audio, frame })
        });
    let enhanced = (
        any::<u32>(),
        any::<u64>(),
        any::<bool>(),
        prop::array::uniform4(any::<u64>()),
        prop::collection::vec(any::<i16>(), 0..200),
    )
        .prop_map(|(seq, capture_ts_us, enhanced, ts, audio)| {
            Message::Enhanced(EnhancedAudio {
                seq,
                capture_ts_us,
                enhanced,
                arrived_server_us: ts[0],
                preprocessed_us: ts[1],
                enhance_start_us: ts[2],
                enhance_done_us: ts[3],
                audio,
            })
        });
    let control = (any::<u32>(), prop_oneof![Just(ControlCode::Ack), Just(ControlCode::EndOfStream)])
        .prop_map(|(seq, code)| Message::Control(Control { seq, code }));
    (any::<u64>(), prop_oneof![media, enhanced, control])
        .prop_map(|(send_ts_us, body)| WireMessage { send_ts_us, body })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn delay_never_below_base(
        preset in prop::sample::select(PRESETS.to_vec()),
        size in 0usize..1_000_000,
        seed in any::<u64>(),
    ) {
        let ch = ChannelModel::preset(preset).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert!(one_way_delay(&ch, size, &mut rng) >= ch.base_one_way_ms);
    }

    #[test]
    fn jitterless_delay_grows_with_size(
        preset in prop::sample::select(PRESETS.to_vec()),
        a in 0usize..1_000_000,
        extra in 1usize..1_000_000,
    ) {
        let ch = ChannelModel::preset(preset).unwrap().without_jitter();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let small = one_way_delay(&ch, a, &mut rng);
        let large = one_way_delay(&ch, a + extra, &mut rng);
        prop_assert!(large > small);
        let expect = ch.base_one_way_ms + 8.0 * a as f64 / ch.bandwidth_bps * 1000.0;
        prop_assert!((small - expect).abs() < 1e-9);
    }

    #[test]
    fn total_delay_is_a_sum(c in 0.0f64..10.0, d in 0.0f64..10.0, a in 0.0f64..10.0) {
        prop_assert_eq!(total_delay(c, d, a), c + d + a);
        prop_assert!(total_delay(c, d, a) >= c.max(d).max(a));
    }

    #[test]
    fn quality_is_scale_invariant(
        clean in signal(256),
        noise in signal(256),
        err in signal(256),
        k in 0.01f64..100.0,
    ) {
        let sig = |v: Vec<f64>| Signal::new(v, 16_000).unwrap();
        let c = sig(clean.clone());
        let n = sig(clean.iter().zip(&noise).map(|(a, b)| a + b).collect());
        let e = sig(clean.iter().zip(&err).map(|(a, b)| a + 0.5 * b).collect());
        let q = quality(&c, &n, &e).unwrap();
        let qs = quality(&c.scaled(k), &n.scaled(k), &e.scaled(k)).unwrap();
        prop_assert!((q.input_snr - qs.input_snr).abs() < 1e-9);
        prop_assert!((q.output_snr - qs.output_snr).abs() < 1e-9);
        prop_assert!((q.improvement - (q.output_snr - q.input_snr)).abs() < 1e-9);
    }

    #[test]
    fn wire_round_trip(msg in message()) {
        let bytes = encode(&msg).unwrap();
        let (back, used) = decode(&bytes).unwrap().unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(&back, &msg);
        prop_assert_eq!(encode(&back).unwrap(), bytes);
    }

    #[test]
    fn decoder_handles_arbitrary_splits(
        msgs in prop::collection::vec(message(), 1..5),
        cuts in prop::collection::vec(1usize..64, 1..20),
    ) {
        let stream: Vec<u8> = msgs.iter().flat_map(|m| encode(m).unwrap()).collect();
        let mut dec = Decoder::new();
        let mut got = Vec::new();
        let mut pos = 0;
        let mut i = 0;
        while pos < stream.len() {
            let end = (pos + cuts[i % cuts.len()]).min(stream.len());
            dec.push(&stream[pos..end]);
            pos = end;
            i += 1;
            while let Some(m) = dec.next_message().unwrap() {
                got.push(m);
            }
        }
        prop_assert_eq!(dec.buffered(), 0);
        prop_assert_eq!(got, msgs);
    }

    #[test]
    fn region_decode_matches_crop(
        f in frame(48),
        q in 1u8..=100,
        rx in 0.0f64..1.0, ry in 0.0f64..1.0, rw in 0.0f64..1.0, rh in 0.0f64..1.0,
    ) {
        let x = (rx * f.width as f64) as usize;
        let y = (ry * f.height as f64) as usize;
        let width = 1 + (rw * (f.width - x - 1) as f64) as usize;
        let height = 1 + (rh * (f.height - y - 1) as f64) as usize;
        let roi = Roi { x, y, width, height };
        let payload = FramePayload::compress(&f, q).unwrap();
        let full = payload.decode_region(None).unwrap().unwrap();
        prop_assert_eq!((full.width, full.height), (f.width, f.height));
        let region = payload.decode_region(Some(&roi)).unwrap().unwrap();
        prop_assert_eq!(region, full.crop(&roi).unwrap());
    }

    #[test]
    fn fusion_round_trip(h in 1usize..10, w in 1usize..10, d in 1usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut map = || {
            let data = (0..h * w * d).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
            FeatureMap::from_vec(h, w, d, data).unwrap()
        };
        let (a, v) = (map(), map());
        let fused = concat_fuse(&a, &v).unwrap();
        prop_assert_eq!(fused.shape(), (h, w, 2 * d));
        let (a2, v2) = deinterleave(&fused).unwrap();
        prop_assert_eq!(a2, a);
        prop_assert_eq!(v2, v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stft_round_trip(
        x in prop::collection::vec(-1.0f64..1.0, 1..4000),
        window in prop_oneof![Just(WindowPair::RectHann), Just(WindowPair::SqrtHann)],
    ) {
        let s = Signal::new(x, 16_000).unwrap();
        let cfg = StftConfig { window, ..StftConfig::default() };
        let back = istft(&cfg.analyze(&s).unwrap()).unwrap();
        prop_assert_eq!(back.len(), s.len());
        let err = s.samples.iter().zip(&back.samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-9, "max error {}", err);
    }

    #[test]
    fn mixture_decomposes(
        src in prop::collection::vec(signal(300), 1..3),
        noise in prop::collection::vec(signal(300), 0..3),
        irs in prop::collection::vec((prop::collection::vec(-1.0f64..1.0, 1..40), 0usize..40), 2),
        k in 0.1f64..10.0,
    ) {
        let sources = src
            .into_iter()
            .zip(&irs)
            .map(|(s, (ir, b))| SceneSource {
                signal: Signal::new(s, 16_000).unwrap(),
                ir: ImpulseResponsePair::split(ir, *b).unwrap(),
            })
            .collect();
        let scene = AcousticScene {
            sources,
            noises: noise.into_iter().map(|n| Signal::new(n, 16_000).unwrap()).collect(),
            seed: 0,
        };
        let m = mix(&scene).unwrap();
        let clean = m.clean_sum();
        for i in 0..m.mixture.len() {
            let parts = clean.samples[i] + m.interference.samples[i];
            prop_assert!((m.mixture.samples[i] - parts).abs() < 1e-12);
        }
        let scaled = mix(&scene.scaled(k)).unwrap();
        for (a, b) in scaled.mixture.samples.iter().zip(&m.mixture.samples) {
            prop_assert!((a - k * b).abs() < 1e-9 * (1.0 + k));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn sim_events_are_ordered_and_conserved(
        preset in prop::sample::select(vec!["ethernet", "5g", "wifi4", "4g"]),
        loss in prop_oneof![Just(0.0), 0.0f64..0.2],
        seed in any::<u64>(),
    ) {
        let mut cfg = PipelineConfig::default();
        cfg.channel = ChannelModel {
            loss_rate: loss,
            ..ChannelModel::preset(preset).unwrap().with_seed(seed)
        };
        cfg.ack_timeout = 0.1;
        cfg.payload.quality = Some(80);
        let out = simulate(&cfg, 1.5).unwrap();
        prop_assert!(out.log.order_violations().is_empty());
        let played = out.log.times(EventKind::Played).len();
        let dropped = out.log.times(EventKind::Dropped).len();
        prop_assert_eq!(played + dropped, out.chunks);
        prop_assert_eq!(out.log.chunk_count(), out.chunks);
        let plays: Vec<f64> = out.log.times(EventKind::Played).iter().map(|p| p.1).collect();
        prop_assert!(plays.windows(2).all(|w| w[1] >= w[0]));
    }
}
