from . common import VERSION, Pseudosphere_Error
from . symcore import Evolution_Model, parse, normalize, total_dx, total_dt_onshell, is_zero_onshell, laurent_eta, evaluate
from . structure import QR_Model, F_Table
from . claws import Conservation_Law, hierarchy
from . models import load
