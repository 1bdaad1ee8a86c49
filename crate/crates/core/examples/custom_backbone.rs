//! Plugging encoders into the registry.
//!
//! A backbone is any [`Encoder`]: something that maps texts to pooled
//! vectors and can be fine-tuned. Three ways to provide one are shown:
//! a local constructor, an external process speaking the JSON-lines
//! protocol, and the same protocol run in-process for testing.

use textfold::classifiers::{
    BackboneOptions, BackboneRegistry, Encoder, EncoderServer, ExternalEncoder, ExternalEncoderConfig,
    LoopbackTransport, ToyEncoder, TOY_VARIANTS,
};

fn main() -> textfold::Result<()> {
    let mut registry = BackboneRegistry::default();

    // 1. A local encoder under a new name.
    registry.register("tiny", |opts| {
        Ok(Box::new(ToyEncoder::new(TOY_VARIANTS[0], opts).with_name("tiny")) as Box<dyn Encoder>)
    });

    // 2. A pretrained encoder served by another process. Nothing is started
    //    until a fold actually builds the backbone.
    registry.register_external(
        "bert",
        ExternalEncoderConfig {
            command: vec!["python3".into(), "scripts/hf_encoder_server.py".into()],
            model: Some("bert-base-uncased".into()),
        },
    );
    println!("registered backbones: {:?}", registry.names());

    // 3. The protocol against an in-process server.
    let opts = BackboneOptions { max_length: 32, seed: 1 };
    let server = EncoderServer::new(BackboneRegistry::default());
    let remote = ExternalEncoder::connect("toy-2", None, Box::new(LoopbackTransport::new(server)), &opts)?;
    let local = registry.build_encoder("toy-2", &opts)?;
    let texts = ["masks work", "5g spreads the virus"];
    let a = remote.encode(&texts)?;
    let b = local.encode(&texts)?;
    println!("pooled dim {}; remote equals local: {}", remote.output_dim(), a == b);

    match registry.check("gpt-9") {
        Err(e) => println!("{e}"),
        Ok(()) => unreachable!(),
    }
    Ok(())
}
