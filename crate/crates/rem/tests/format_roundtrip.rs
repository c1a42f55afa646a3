use proptest::prelude::*;
use rem::formats::{parse_samples, write_samples, Format, ParseMode};
use rem_core::{BeaconSample, Dataset, MacAddr, Position};

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6..1e6f64,
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        Just(0.0),
        Just(-0.0),
    ]
}

fn sample() -> impl Strategy<Value = BeaconSample> {
    (
        0..=i64::MAX as u64,
        (finite(), finite(), finite()),
        prop_oneof!["\\PC{0,24}", "[ -~\n\r\t\"]{0,24}"],
        any::<[u8; 6]>(),
        -100..=0i32,
        1..=14u8,
    )
        .prop_map(|(timestamp, (x, y, z), ssid, mac, rssi, channel)| BeaconSample {
            timestamp,
            position: Position::new(x, y, z),
            ssid,
            mac: MacAddr(mac),
            rssi,
            channel,
        })
}

fn roundtrip(samples: Vec<BeaconSample>, format: Format) -> Result<(), TestCaseError> {
    let data = Dataset::new(samples, "prop");
    let mut buf = Vec::new();
    write_samples(&mut buf, &data, format).unwrap();
    let back = parse_samples(buf.as_slice(), format, ParseMode::Strict, "prop").unwrap();
    prop_assert!(back.skipped.is_empty());
    prop_assert_eq!(back.dataset.samples.len(), data.samples.len());
    for (a, b) in back.dataset.samples.iter().zip(&data.samples) {
        prop_assert_eq!(a, b);
        prop_assert_eq!(a.position.x.to_bits(), b.position.x.to_bits());
    }
    Ok(())
}

proptest! {
    #[test]
    fn csv_roundtrip(samples in prop::collection::vec(sample(), 0..20)) {
        roundtrip(samples, Format::Csv)?;
    }

    #[test]
    fn jsonl_roundtrip(samples in prop::collection::vec(sample(), 0..20)) {
        roundtrip(samples, Format::Jsonl)?;
    }

    #[test]
    fn lenient_keeps_exactly_the_valid_rows(
        samples in prop::collection::vec(sample(), 1..12),
        bad in prop::collection::vec(any::<bool>(), 12),
    ) {
        // emit record by record, corrupting the rssi of the marked ones
        let mut out = String::from("timestamp,x,y,z,ssid,rssi,mac,channel\n");
        let mut kept = Vec::new();
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        for (s, &corrupt) in samples.iter().zip(&bad) {
            let rssi = if corrupt { "7".to_string() } else { s.rssi.to_string() };
            w.write_record([
                s.timestamp.to_string(),
                s.position.x.to_string(),
                s.position.y.to_string(),
                s.position.z.to_string(),
                s.ssid.clone(),
                rssi,
                s.mac.to_string(),
                s.channel.to_string(),
            ]).unwrap();
            if !corrupt {
                kept.push(s.clone());
            }
        }
        out.push_str(std::str::from_utf8(&w.into_inner().unwrap()).unwrap());
        let parsed = parse_samples(out.as_bytes(), Format::Csv, ParseMode::Lenient, "prop").unwrap();
        prop_assert_eq!(parsed.dataset.samples, kept);
        let n_bad = bad.iter().take(samples.len()).filter(|b| **b).count();
        prop_assert_eq!(parsed.skipped.len(), n_bad);
        prop_assert!(parsed.skipped.iter().all(|e| e.field.as_deref() == Some("rssi")));
    }
}
