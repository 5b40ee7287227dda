"""uifuse: construct cohesive game interfaces by fusing UI visuals into UX structure.

Pipeline: parse paired design protocols, learn per-node multimodal
representations and node-to-group matching probabilities, solve the
constrained assignment with hierarchy/rendering regularization, integrate
visual attributes, and measure matching/visual fidelity. Exposed through a
library API, a CLI (``uifuse``), and an HTTP service.
"""

__version__ = "0.1.0"
