use htmodel_demo::{alpha_sweep, clean_text, merge_labels};

#[test]
fn exports_return_json() {
    let v: serde_json::Value = serde_json::from_str(&clean_text("Great games and a comfortable strap", 2).unwrap()).unwrap();
    assert_eq!(v["english"], true);
    assert!(v["tokens"].as_array().unwrap().iter().any(|t| t["stem"] == "comfort"));

    let v: serde_json::Value = serde_json::from_str(&merge_labels("Price\nPrice\nMotion sickness", 0.8, 1).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);

    let models = r#"[{"model":"a","coherence":0.1,"coverage":0.5,"diversity":0.5,"q":1.0}]"#;
    let v: serde_json::Value = serde_json::from_str(&alpha_sweep(models).unwrap()).unwrap();
    assert_eq!(v["best"][0]["models"][0], "a");
}
