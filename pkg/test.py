#Offline smoke run of the whole pipeline
from causalprompt.cli.Pipeline import run_pipeline
from causalprompt.utils.Config import load_config
import json
from dotenv import load_dotenv

load_dotenv()


config = load_config(overrides={
    "output_dir": "runs/smoke",
    "llm.mock": "true",
    "combos_per_question": "0",
    "ga.population": "12",
    "ga.generations": "10",
    "ga.survivors": "4",
})

manifest = run_pipeline(config)
print(json.dumps(manifest, indent=2))

with open("runs/smoke/analysis.md", "r", encoding="utf-8") as handle:
    print(handle.read())

with open("runs/smoke/optimizer.json", "r", encoding="utf-8") as handle:
    print(json.load(handle)["ours"])
