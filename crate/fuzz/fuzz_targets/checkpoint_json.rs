#![no_main]
use libfuzzer_sys::fuzz_target;
use sgmus::nn::ScoreNetwork;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // Oversized networks are valid but slow; keep iterations cheap.
    if text.len() > 1 << 16 {
        return;
    }
    if let Ok(net) = ScoreNetwork::from_json(text) {
        let text = net.to_json().expect("loaded network serializes");
        let again = ScoreNetwork::from_json(&text).expect("round trip");
        assert_eq!(again.to_json().unwrap(), text);
        let x = vec![0.0; net.data_dim];
        let y = vec![0.0; net.label_dim];
        let _ = net.forward(&x, net.schedule.t_max, &y);
    }
});
