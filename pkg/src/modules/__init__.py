"""
核心模組包

- errors: 例外類別與參數驗證
- randkit: 亂數流、分布取樣與動差對照值
- paths: 分段路徑
- telegraph: 電報過程取樣與封閉形式動差
- surrogate: 中間過程 Y、Z̃、Z 與網格漫步
- kmt: 拉普拉斯與高斯部分和的 KMT 耦合
- couplings: 獨立、擲幣、同步、KMT 與鏈式耦合
- transport: 路徑成本與經驗 Wasserstein 估計
- bounds: 解析界限
- report_models: 報表與實驗配置模型
- harness: 實驗執行器
"""
