"""
异常定义
每个异常带有 code，Action 层据此生成 ExperimentResult.error_code
"""
from typing import Optional


class BesselError(Exception):
    """所有数值/配置错误的基类"""
    code: str = "ERROR"


class DomainError(BesselError, ValueError):
    """参数不在定义域内（例如 x = y 处求核值）"""
    code = "DOMAIN_ERROR"


class QuadratureError(BesselError):
    """自适应求积耗尽最大细分次数"""
    code = "QUADRATURE_NONCONVERGENCE"

    def __init__(self, message: str, achieved_error: Optional[float] = None):
        super().__init__(message)
        self.achieved_error = achieved_error


class PrincipalValueError(BesselError):
    """主值外推的两个估计相差超过容差"""
    code = "PV_NONCONVERGENCE"

    def __init__(self, message: str, estimate: Optional[float] = None,
                 error: Optional[float] = None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class CertificationError(BesselError):
    """符号证书无法建立（通常意味着求积配置有误）"""
    code = "CERTIFICATION_FAILURE"


class HypothesisViolation(BesselError, ValueError):
    """输入不满足构造所需的假设"""
    code = "HYPOTHESIS_VIOLATION"


class DenominatorDegeneracy(BesselError):
    """R̃g(x0) 过小，常数表配置有误"""
    code = "DENOMINATOR_DEGENERACY"


class DivergenceDetected(BesselError):
    """迭代分解的残差界连续两层未下降"""
    code = "DIVERGENCE_DETECTED"

    def __init__(self, message: str, ratio: Optional[float] = None):
        super().__init__(message)
        self.ratio = ratio


class ConfigError(BesselError, ValueError):
    """配置非法"""
    code = "CONFIG_INVALID"
