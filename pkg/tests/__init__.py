"""
測試模組包

包含所有測試案例：
- 單元測試
- 整合測試
- 效能測試
- 統計檢驗與性質測試
"""