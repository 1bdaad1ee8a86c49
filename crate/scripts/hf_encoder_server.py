#!/usr/bin/env python3
"""Serve a Hugging Face encoder over the textfold JSON-lines protocol.

Register it as an external backbone, e.g. in a run config:

    "external_backbones": {
        "bert": {"command": ["python3", "scripts/hf_encoder_server.py"],
                 "model": "bert-base-uncased"}
    }

Requires torch and transformers. Pooled output is the first-token hidden state.
"""

import base64
import copy
import io
import json
import sys

import torch
from transformers import AutoModel, AutoTokenizer

DEFAULT_MODELS = {
    "bert": "bert-base-uncased",
    "ernie": "nghuyong/ernie-2.0-base-en",
    "roberta": "roberta-base",
    "xlnet": "xlnet-base-cased",
    "electra": "google/electra-base-discriminator",
    "covid-twitter-bert": "digitalepidemiologylab/covid-twitter-bert-v2",
}


class Server:
    def __init__(self):
        self.model = None
        self.tokenizer = None
        self.max_length = 128
        self.last = None
        self.snapshots = []
        self.moments = {}
        self.t = 0
        self.device = torch.device("cuda" if torch.cuda.is_available() else "cpu")

    def params(self):
        return [p for p in self.model.parameters() if p.requires_grad]

    def init(self, req):
        name = req.get("model") or DEFAULT_MODELS.get(req["backbone"], req["backbone"])
        torch.manual_seed(req["seed"])
        self.tokenizer = AutoTokenizer.from_pretrained(name)
        self.model = AutoModel.from_pretrained(name).to(self.device)
        self.max_length = req["max_length"]
        self.snapshots.clear()
        self.moments.clear()
        self.t = 0
        return {"dim": self.model.config.hidden_size}

    def encode(self, req):
        batch = self.tokenizer(
            req["texts"], padding=True, truncation=True, max_length=self.max_length, return_tensors="pt"
        ).to(self.device)
        if req.get("train"):
            self.model.train()
            pooled = self.model(**batch).last_hidden_state[:, 0, :]
            self.last = pooled
        else:
            self.model.eval()
            with torch.no_grad():
                pooled = self.model(**batch).last_hidden_state[:, 0, :]
        return {"pooled": pooled.detach().double().cpu().tolist()}

    def backward(self, req):
        if self.last is None:
            raise ValueError("backward without a training encode")
        grad = torch.tensor(req["grad"], dtype=self.last.dtype, device=self.device)
        self.last.backward(grad)
        self.last = None
        return {}

    def grad_sq_norm(self, _req):
        total = sum(float((p.grad.double() ** 2).sum()) for p in self.params() if p.grad is not None)
        return {"value": total}

    @torch.no_grad()
    def step(self, req):
        lr, scale, opt = req["lr"], req["grad_scale"], req["optimizer"]
        self.t += 1
        for i, p in enumerate(self.params()):
            if p.grad is None:
                continue
            g = p.grad * scale
            if opt.get("kind") == "adamw":
                b1, b2 = opt.get("beta1", 0.9), opt.get("beta2", 0.999)
                m, v = self.moments.get(i, (torch.zeros_like(p), torch.zeros_like(p)))
                m.mul_(b1).add_(g, alpha=1 - b1)
                v.mul_(b2).addcmul_(g, g, value=1 - b2)
                self.moments[i] = (m, v)
                m_hat = m / (1 - b1**self.t)
                v_hat = v / (1 - b2**self.t)
                p.mul_(1 - lr * opt.get("weight_decay", 0.01))
                p.sub_(lr * m_hat / (v_hat.sqrt() + opt.get("eps", 1e-8)))
            else:
                p.sub_(lr * g)
            p.grad = None
        return {}

    def snapshot(self, _req):
        self.snapshots.append(copy.deepcopy(self.model.state_dict()))
        return {"tag": str(len(self.snapshots) - 1)}

    def restore(self, req):
        self.model.load_state_dict(self.snapshots[int(req["tag"])])
        return {}

    def save(self, _req):
        buf = io.BytesIO()
        torch.save(self.model.state_dict(), buf)
        return {"state": base64.b64encode(buf.getvalue()).decode("ascii")}

    def load(self, req):
        buf = io.BytesIO(base64.b64decode(req["state"]))
        self.model.load_state_dict(torch.load(buf, map_location=self.device))
        return {}


def main():
    server = Server()
    for line in sys.stdin:
        if not line.strip():
            continue
        req = json.loads(line)
        op = req.get("op")
        try:
            if op == "shutdown":
                reply = {}
            elif op in ("init", "encode", "backward", "grad_sq_norm", "step", "snapshot", "restore", "save", "load"):
                reply = getattr(server, op)(req)
            else:
                raise ValueError(f"unknown op `{op}`")
            reply["ok"] = True
        except Exception as e:  # report, keep serving
            reply = {"ok": False, "error": str(e)}
        sys.stdout.write(json.dumps(reply) + "\n")
        sys.stdout.flush()
        if op == "shutdown":
            break


if __name__ == "__main__":
    main()
