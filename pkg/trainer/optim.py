import numpy as np

from autodiff.nn import Parameter


class Adam:
    """Adaptive moment estimation over a fixed list of parameters."""

    def __init__(self, parameters: list[Parameter], learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.parameters = list(parameters)
        names = [parameter.name for parameter in self.parameters]
        if len(set(names)) != len(names):
            raise ValueError("Adam needs uniquely named parameters")
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = {parameter.name: np.zeros_like(parameter.value) for parameter in self.parameters}
        self.v = {parameter.name: np.zeros_like(parameter.value) for parameter in self.parameters}

    def step(self, gradients: dict[Parameter, np.ndarray]):
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for parameter in self.parameters:
            grad = gradients.get(parameter)
            if grad is None:
                continue
            m = self.beta1 * self.m[parameter.name] + (1.0 - self.beta1) * grad
            v = self.beta2 * self.v[parameter.name] + (1.0 - self.beta2) * grad * grad
            self.m[parameter.name] = m
            self.v[parameter.name] = v
            update = self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.epsilon)
            parameter.value = parameter.value - update

    def state_dict(self) -> dict:
        return {
            "t": self.t,
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "m": {name: np.asarray(value).tolist() for name, value in self.m.items()},
            "v": {name: np.asarray(value).tolist() for name, value in self.v.items()},
        }

    def load_state_dict(self, state: dict):
        missing = {parameter.name for parameter in self.parameters} - set(state["m"])
        if missing:
            raise ValueError(f"Optimizer state lacks moments for {sorted(missing)[0]}")
        self.t = int(state["t"])
        self.learning_rate = float(state["learning_rate"])
        self.beta1 = float(state["beta1"])
        self.beta2 = float(state["beta2"])
        self.epsilon = float(state["epsilon"])
        self.m = {parameter.name: np.array(state["m"][parameter.name]) for parameter in self.parameters}
        self.v = {parameter.name: np.array(state["v"][parameter.name]) for parameter in self.parameters}
