about = {
    "name": "pulsemap",
    "version": "1.0.0",
    "description": "Mapas 2D de biossinais (ECG/PPG) e transformer multimodal biossensor + face "
                   "pré-treinado com autoencoder mascarado e correspondência contrastiva.",
    "commands": ["transform", "render", "synth", "pretrain", "finetune", "eval", "compare"],
}
