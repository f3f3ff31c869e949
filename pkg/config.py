from pydantic_settings import BaseSettings

class Settings(BaseSettings):
    # Replicator dynamics
    tol: float = 1e-8
    max_iter: int = 10000
    support_threshold: float = 1e-5

    # Recurrent clustering and pooling
    max_depth: int = 4

    # Brute-force oracle limits
    oracle_cap: int = 12
    brute_force_cap: int = 10
    verify_tol: float = 1e-6

    # Training
    seed: int = 0
    learning_rate: float = 0.5
    front_end_learning_rate: float = 1e-3
    epochs: int = 200
    l2: float = 1e-4
    log_every: int = 50

    # Gradient check
    gradcheck_eps: float = 1e-5
    gradcheck_threshold: float = 1e-4

    log_level: str = "WARNING"
    environment: str = "development"

    class Config:
        env_file = ".env"
        env_prefix = "DSPOOL_"

settings = Settings()
