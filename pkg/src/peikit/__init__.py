"""peikit: encoder-inference attack toolkit over a simulated EaaS ecosystem.

Library layers, bottom up: seeded primitives (`seeds`, `core`, `tensorio`),
the toy ecosystem (`zoo`, `datasets`, `head`, `service`), the attack
(`synthesis`, `inference`), countermeasures (`defense`), case studies
(`stealing`, `adversarial`), the wire simulator (`wire`, `server`,
`client`), and orchestration (`config`, `pipeline`, `report`, `cli`).
"""

__version__ = "0.1.0"
