use std::path::Path;

use kuramoto_oed::io::read_json;
use kuramoto_oed::uncertainty::{Setup, SetupFile};

#[test]
fn bundled_setup_files_match_presets() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../setups");
    for setup in [Setup::FiveOsc, Setup::SevenOsc] {
        let file: SetupFile = read_json(&dir.join(format!("{setup}.json"))).unwrap();
        file.validate().unwrap();
        assert_eq!(file, SetupFile::from_preset(setup), "{setup}");
    }
}
